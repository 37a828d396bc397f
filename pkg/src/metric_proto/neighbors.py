"""Exact nearest-neighbor search with index tie-breaking.

Neighbors are ordered by (distance, dataset index): among equidistant points
the one with the lower index is declared closer.  Indices are 0-based
positions in the dataset.

``k_nearest`` is the brute-force reference.  ``PivotIndex`` prunes with the
triangle inequality and returns exactly the same lists.  The ``*_batch``
helpers answer many queries at once; for one-dimensional Euclidean data they
use a sorted-window search that falls back to brute force whenever a
boundary tie makes the window ambiguous.  Large multi-dimensional L_p
nearest-point and label-count queries go through a k-d tree and are re-checked by brute
force whenever the boundary candidates are too close to call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.spatial import cKDTree

from .metric import LpSpace, MetricSpace, npoints, take


@dataclass(frozen=True)
class NeighborList:
    query: Any
    indices: np.ndarray
    distances: np.ndarray

    def __len__(self):
        return len(self.indices)

    def __eq__(self, other):
        if not isinstance(other, NeighborList):
            return NotImplemented
        return (np.array_equal(self.indices, other.indices)
                and np.array_equal(self.distances, other.distances))


def _check_k(k: int, n: int) -> None:
    if n == 0:
        raise ValueError("empty dataset")
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range [1, {n}]")


def k_nearest(space: MetricSpace, dataset, query, k: int) -> NeighborList:
    """The first ``k`` points of ``dataset`` in (distance, index) order."""
    n = npoints(dataset)
    _check_k(k, n)
    d = space.to_many(query, dataset)
    order = np.argsort(d, kind="stable")[:k]
    return NeighborList(query, order, d[order])


class PivotIndex:
    """Pivot table for triangle-inequality pruning (LAESA style).

    Pivots come from a greedy farthest-point sweep started at index 0.  For
    a query q and point x, ``max_p |d(q,p) - d(x,p)|`` lower-bounds d(q,x);
    points whose bound exceeds the current k-th distance by more than the
    rounding slack are never evaluated.
    """

    def __init__(self, space: MetricSpace, dataset, n_pivots: int | None = None):
        n = npoints(dataset)
        if n == 0:
            raise ValueError("empty dataset")
        self.space = space
        self.dataset = dataset
        self.n = n
        n_pivots = math.ceil(math.sqrt(n)) if n_pivots is None else n_pivots
        n_pivots = max(1, min(n, n_pivots))
        pivots = [0]
        table = [space.to_many(dataset[0], dataset)]
        nearest = table[0].copy()
        for _ in range(1, n_pivots):
            nxt = int(np.argmax(nearest))
            if nearest[nxt] == 0:
                break
            pivots.append(nxt)
            row = space.to_many(dataset[nxt], dataset)
            table.append(row)
            np.minimum(nearest, row, out=nearest)
        self.pivots = np.array(pivots, dtype=np.intp)
        self.table = np.vstack(table)
        self._pivot_points = take(dataset, self.pivots)
        self._scale = float(self.table.max(initial=0.0))

    def query(self, query, k: int) -> NeighborList:
        _check_k(k, self.n)
        dq = self.space.to_many(query, self._pivot_points)
        lb = np.abs(self.table - dq[:, None]).max(axis=0)
        # rounding in either distance can make lb overshoot d(q,x) by a few ulps
        slack = 1e-9 * (self._scale + float(dq.max(initial=0.0))) + 1e-300
        order = np.argsort(lb, kind="stable")
        best_d = np.empty(0)
        best_i = np.empty(0, dtype=np.intp)
        pos, batch = 0, max(k, 16)
        while pos < self.n:
            if len(best_i) == k and lb[order[pos]] - slack > best_d[-1]:
                break
            cand = order[pos:pos + batch]
            pos += len(cand)
            dc = self.space.to_many(query, take(self.dataset, cand))
            all_d = np.concatenate([best_d, dc])
            all_i = np.concatenate([best_i, cand])
            sel = np.lexsort((all_i, all_d))[:k]
            best_d, best_i = all_d[sel], all_i[sel]
            batch *= 2
        return NeighborList(query, best_i, best_d)


def build_pivot_index(space: MetricSpace, dataset, n_pivots: int | None = None) -> PivotIndex:
    return PivotIndex(space, dataset, n_pivots)


def k_nearest_pruned(space: MetricSpace, index_structure: PivotIndex, query, k: int) -> NeighborList:
    if index_structure.space is not space:
        raise ValueError("index was built over a different space")
    return index_structure.query(query, k)


# ---------------------------------------------------------------------------
# batch queries


def _is_line(space: MetricSpace, points) -> bool:
    return (type(space) is LpSpace and space.p == 2.0
            and isinstance(points, np.ndarray) and points.ndim == 2 and points.shape[1] == 1)


class _SortedLine:
    """Points on the real line sorted by (value, index)."""

    def __init__(self, points: np.ndarray):
        self.order = np.argsort(points[:, 0], kind="stable")
        self.values = points[self.order, 0]

    @staticmethod
    def dist(x, a):
        # same arithmetic as LpSpace(2) on one coordinate
        diff = a - x
        return np.sqrt(diff * diff)

    def windows(self, q: np.ndarray, k: int):
        """Start of the k-window closest to each query, plus a mask of ambiguous queries."""
        a, n = self.values, len(self.values)
        lo = np.zeros(len(q), dtype=np.intp)
        hi = np.full(len(q), n - k, dtype=np.intp)
        # first start s with q - a[s] <= a[s+k] - q (s = n-k if none); the signed
        # form is monotone in s even when values repeat
        while True:
            active = lo < hi
            if not active.any():
                break
            mid = np.minimum((lo + hi) // 2, max(n - k - 1, 0))
            keep_left = (q - a[mid]) <= (a[mid + k] - q)
            hi = np.where(active & keep_left, mid, hi)
            lo = np.where(active & ~keep_left, mid + 1, lo)
        kth = np.maximum(self.dist(q, a[lo]), self.dist(q, a[lo + k - 1]))
        tie = np.zeros(len(q), dtype=bool)
        left = lo > 0
        tie[left] |= self.dist(q[left], a[lo[left] - 1]) == kth[left]
        right = lo + k < n
        tie[right] |= self.dist(q[right], a[lo[right] + k]) == kth[right]
        return lo, tie


def _knn_rows(space, points, queries, k):
    """Exact (nq, k) neighbor indices by brute force, chunked over queries."""
    nq, n = npoints(queries), npoints(points)
    out = np.empty((nq, k), dtype=np.intp)
    step = max(1, 4_000_000 // max(1, n))
    for s in range(0, nq, step):
        idx = np.arange(s, min(nq, s + step))
        D = space.pairwise(take(queries, idx), points)
        if k < n:
            part = np.argpartition(D, k - 1, axis=1)[:, :k]
            kth = np.take_along_axis(D, part, axis=1).max(axis=1)
            ambiguous = (D <= kth[:, None]).sum(axis=1) > k
        else:
            part = np.tile(np.arange(n), (len(idx), 1))
            ambiguous = np.zeros(len(idx), dtype=bool)
        dsel = np.take_along_axis(D, part, axis=1)
        ordr = np.lexsort((part, dsel), axis=1)
        rows = np.take_along_axis(part, ordr, axis=1)
        for r in np.flatnonzero(ambiguous):
            rows[r] = np.argsort(D[r], kind="stable")[:k]
        out[idx] = rows
    return out


def knn_batch(space: MetricSpace, points, queries, k: int) -> np.ndarray:
    """(nq, k) array of neighbor indices, each row in (distance, index) order."""
    _check_k(k, npoints(points))
    return _knn_rows(space, points, queries, k)


_KDTREE_MIN_WORK = 1 << 22
_CLOSE_CALL = 1e-9


def _nearest_kdtree(space: LpSpace, points: np.ndarray, queries: np.ndarray) -> np.ndarray:
    # The tree computes distances with its own arithmetic, so its answer is
    # only trusted when the runner-up is clearly farther; near-ties are
    # recomputed with the space's own distance and the lowest-index rule.
    d, idx = cKDTree(points).query(queries, k=2, p=space.p)
    out = idx[:, 0].astype(np.intp)
    close = d[:, 1] - d[:, 0] <= _CLOSE_CALL * np.maximum(1.0, d[:, 1])
    if close.any():
        rows = np.flatnonzero(close)
        out[rows] = np.argmin(space.pairwise(queries[rows], points), axis=1)
    return out


def nearest_batch(space: MetricSpace, points, queries) -> np.ndarray:
    """Index of the nearest point for each query (lowest index on ties)."""
    n = npoints(points)
    _check_k(1, n)
    if _is_line(space, points) and isinstance(queries, np.ndarray):
        line = _SortedLine(points)
        q = queries[:, 0]
        lo, tie = line.windows(q, 1)
        out = line.order[lo]
        if tie.any():
            out[tie] = _knn_rows(space, points, queries[tie], 1)[:, 0]
        return out
    nq = npoints(queries)
    if (type(space) is LpSpace and isinstance(points, np.ndarray) and isinstance(queries, np.ndarray)
            and n >= 2 and nq * n >= _KDTREE_MIN_WORK):
        return _nearest_kdtree(space, points, queries)
    out = np.empty(nq, dtype=np.intp)
    step = max(1, 4_000_000 // n)
    for s in range(0, nq, step):
        idx = np.arange(s, min(nq, s + step))
        out[idx] = np.argmin(space.pairwise(take(queries, idx), points), axis=1)
    return out


def neighbor_label_counts(space: MetricSpace, points, onehot: np.ndarray, queries, k: int) -> np.ndarray:
    """Per-query class counts among the k nearest labeled points.

    ``onehot`` is an (n, M) integer indicator matrix of the labels.
    """
    n = npoints(points)
    _check_k(k, n)
    if _is_line(space, points) and isinstance(queries, np.ndarray):
        line = _SortedLine(points)
        csum = np.zeros((n + 1, onehot.shape[1]), dtype=np.int64)
        np.cumsum(onehot[line.order], axis=0, out=csum[1:])
        q = queries[:, 0]
        lo, tie = line.windows(q, k)
        counts = csum[lo + k] - csum[lo]
        if tie.any():
            rows = _knn_rows(space, points, queries[tie], k)
            counts[tie] = onehot[rows].sum(axis=1)
        return counts
    if (type(space) is LpSpace and isinstance(points, np.ndarray) and isinstance(queries, np.ndarray)
            and k < n and npoints(queries) * n >= _KDTREE_MIN_WORK):
        return _label_counts_kdtree(space, points, onehot, queries, k)
    rows = _knn_rows(space, points, queries, k)
    return onehot[rows].sum(axis=1)


def _label_counts_kdtree(space: LpSpace, points, onehot, queries, k):
    # Only the neighbor set matters for counts; it is unambiguous when the
    # k-th and (k+1)-th tree distances are clearly apart.
    d, idx = cKDTree(points).query(queries, k=k + 1, p=space.p)
    d, idx = d.reshape(len(queries), k + 1), idx.reshape(len(queries), k + 1)
    counts = onehot[idx[:, :k]].sum(axis=1)
    close = d[:, k] - d[:, k - 1] <= _CLOSE_CALL * np.maximum(1.0, d[:, k])
    if close.any():
        rows = np.flatnonzero(close)
        counts[rows] = onehot[_knn_rows(space, points, queries[rows], k)].sum(axis=1)
    return counts
