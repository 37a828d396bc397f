"""Voronoi partitions induced by a nucleus sample, and per-cell label tallies."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .metric import MetricSpace, npoints
from .neighbors import k_nearest, nearest_batch


@dataclass(frozen=True)
class VoronoiPartition:
    """Cells A_1..A_m around nuclei kept in draw order.

    A point belongs to the cell of its nearest nucleus; equidistant nuclei
    resolve to the lower index.  Cells are 0-based.
    """

    space: MetricSpace
    nuclei: object

    @property
    def m(self) -> int:
        return npoints(self.nuclei)

    def assign_cell(self, x) -> int:
        return int(k_nearest(self.space, self.nuclei, x, 1).indices[0])

    def assign(self, points) -> np.ndarray:
        """Cell index of every point in a collection."""
        if npoints(points) == 0:
            return np.empty(0, dtype=np.intp)
        return nearest_batch(self.space, self.nuclei, points)


def build_partition(space: MetricSpace, nuclei) -> VoronoiPartition:
    nuclei = space.coerce(nuclei)
    if npoints(nuclei) == 0:
        raise ValueError("a partition needs at least one nucleus")
    return VoronoiPartition(space, nuclei)


def assign_cell(partition: VoronoiPartition, x) -> int:
    return partition.assign_cell(x)


@dataclass(frozen=True)
class CellStats:
    """Per-cell sample counts plus class counts (classification) or label sums (regression)."""

    n_cell: np.ndarray
    class_counts: np.ndarray | None = None
    label_sums: np.ndarray | None = None
    label_min: np.ndarray | None = None
    label_max: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.n_cell.sum())


def check_class_labels(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (not np.issubdtype(labels.dtype, np.integer)):
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise ValueError("class labels must be integers")
        labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 1 or labels.max() > n_classes):
        raise ValueError(f"class labels must lie in 1..{n_classes}")
    return labels.astype(np.int64)


def tally(partition: VoronoiPartition, points, labels, n_classes: int | None = None) -> CellStats:
    """Count samples per cell; with ``n_classes`` also count each class, else sum real labels."""
    m = partition.m
    cells = partition.assign(points)
    n_cell = np.bincount(cells, minlength=m)
    if n_classes is None:
        y = np.asarray(labels, dtype=np.float64)
        if not np.all(np.isfinite(y)):
            raise ValueError("regression labels must be finite")
        # fsum per cell: exactly rounded, hence independent of data order
        order = np.argsort(cells, kind="stable")
        bounds = np.cumsum(n_cell)[:-1]
        chunks = np.split(y[order], bounds)
        sums = np.array([math.fsum(c) for c in chunks])
        lo = np.array([c.min() if len(c) else 0.0 for c in chunks])
        hi = np.array([c.max() if len(c) else 0.0 for c in chunks])
        return CellStats(n_cell, label_sums=sums, label_min=lo, label_max=hi)
    y = check_class_labels(labels, n_classes)
    counts = np.bincount(cells * n_classes + (y - 1), minlength=m * n_classes).reshape(m, n_classes)
    return CellStats(n_cell, class_counts=counts)
