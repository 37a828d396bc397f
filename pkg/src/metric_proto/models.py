"""Fitted prototype and nearest-neighbor predictors.

Classifiers are plug-in rules: each keeps integer class counts from which
the posterior estimate is ``counts / denominator`` (0/0 = 0), and predicts
the class with the largest count.  Class labels are ``1..M``; ties,
including an all-zero vector, go to the lowest label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .metric import MetricSpace, npoints, take
from .neighbors import k_nearest, neighbor_label_counts
from .partition import VoronoiPartition, build_partition, check_class_labels, tally


@dataclass
class LabeledDataset:
    """Points X_1..X_n with class labels in 1..M, or real labels when ``n_classes`` is None."""

    points: object
    labels: np.ndarray
    n_classes: int | None = None

    def __post_init__(self):
        if npoints(self.points) != len(self.labels):
            raise ValueError(f"{npoints(self.points)} points but {len(self.labels)} labels")
        if self.n_classes is None:
            self.labels = np.asarray(self.labels, dtype=np.float64)
        else:
            if self.n_classes < 1:
                raise ValueError("n_classes must be positive")
            self.labels = check_class_labels(self.labels, self.n_classes)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def is_classification(self) -> bool:
        return self.n_classes is not None

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.intp)
        return LabeledDataset(take(self.points, idx), self.labels[idx], self.n_classes)

    def onehot(self) -> np.ndarray:
        out = np.zeros((self.n, self.n_classes), dtype=np.int64)
        out[np.arange(self.n), self.labels - 1] = 1
        return out


def _require_classification(data: LabeledDataset) -> None:
    if not data.is_classification:
        raise ValueError("classification rule fitted on regression-mode data")


def _ratio(counts: np.ndarray, denom: np.ndarray) -> np.ndarray:
    denom = np.asarray(denom)
    safe = np.where(denom > 0, denom, 1)
    return np.where(denom[..., None] > 0, counts / safe[..., None], 0.0)


def _argmax_label(counts: np.ndarray) -> np.ndarray:
    return np.argmax(counts, axis=-1) + 1


class _CellVoteModel:
    """Shared prediction path: route to a nucleus, read its stored counts."""

    partition: VoronoiPartition
    counts: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.counts.shape[1]

    @property
    def space(self) -> MetricSpace:
        return self.partition.space

    def _denominators(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def posteriors(self) -> np.ndarray:
        return _ratio(self.counts, self._denominators())

    def posterior_counts(self, points):
        cells = self.partition.assign(points)
        return self.counts[cells], self._denominators()[cells]

    def posterior(self, points) -> np.ndarray:
        return self.posteriors[self.partition.assign(points)]

    def predict(self, points) -> np.ndarray:
        return _argmax_label(self.counts)[self.partition.assign(points)]

    def predict_one(self, x) -> int:
        return int(_argmax_label(self.counts[self.partition.assign_cell(x)]))


@dataclass(eq=False)
class ProtoNNModel(_CellVoteModel):
    """Majority vote of the labeled points falling in each Voronoi cell."""

    partition: VoronoiPartition
    counts: np.ndarray
    n_cell: np.ndarray

    def _denominators(self):
        return self.n_cell


@dataclass(eq=False)
class ProtoKNNModel(_CellVoteModel):
    """Each nucleus stores the class counts of its k nearest labeled points."""

    partition: VoronoiPartition
    counts: np.ndarray
    k: int

    def _denominators(self):
        return np.full(len(self.counts), self.k)


@dataclass(eq=False)
class KNNModel:
    space: MetricSpace
    data: LabeledDataset
    k: int
    _onehot: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        _require_classification(self.data)
        if not 1 <= self.k <= self.data.n:
            raise ValueError(f"k={self.k} out of range [1, {self.data.n}]")
        self._onehot = self.data.onehot()

    @property
    def n_classes(self) -> int:
        return self.data.n_classes

    def posterior_counts(self, points):
        counts = neighbor_label_counts(self.space, self.data.points, self._onehot, points, self.k)
        return counts, np.full(len(counts), self.k)

    def posterior(self, points) -> np.ndarray:
        return self.posterior_counts(points)[0] / self.k

    def predict(self, points) -> np.ndarray:
        return _argmax_label(self.posterior_counts(points)[0])

    def predict_one(self, x) -> int:
        return predict_knn(self.data, x, self.k, self.space)[0]


@dataclass(eq=False)
class GammaNetModel:
    """Voronoi majority vote over a gamma-net of the training points."""

    gamma: float
    net_indices: np.ndarray
    proto: ProtoNNModel
    holdout_errors: dict = field(default_factory=dict)

    @property
    def net(self):
        return self.proto.partition.nuclei

    @property
    def space(self):
        return self.proto.space

    @property
    def n_classes(self):
        return self.proto.n_classes

    def posterior_counts(self, points):
        return self.proto.posterior_counts(points)

    def posterior(self, points):
        return self.proto.posterior(points)

    def predict(self, points):
        return self.proto.predict(points)

    def predict_one(self, x):
        return self.proto.predict_one(x)


@dataclass(eq=False)
class PartitionRegressor:
    """Cell means of real labels; ``truncated`` zeroes cells holding fewer than ln(n) points."""

    partition: VoronoiPartition
    means: np.ndarray
    n_cell: np.ndarray
    n: int

    @property
    def space(self):
        return self.partition.space

    def _values(self, truncated: bool) -> np.ndarray:
        if not truncated:
            return self.means
        # natural log; an empty training set keeps every cell at zero
        threshold = math.log(self.n) if self.n > 0 else math.inf
        return np.where(self.n_cell >= threshold, self.means, 0.0)

    def predict(self, points, truncated: bool = False) -> np.ndarray:
        return self._values(truncated)[self.partition.assign(points)]

    def predict_one(self, x, truncated: bool = False) -> float:
        return float(self._values(truncated)[self.partition.assign_cell(x)])


# ---------------------------------------------------------------------------
# fitting


def fit_proto_nn(data: LabeledDataset, nuclei, space: MetricSpace) -> ProtoNNModel:
    _require_classification(data)
    partition = build_partition(space, nuclei)
    stats = tally(partition, data.points, data.labels, data.n_classes)
    return ProtoNNModel(partition, stats.class_counts, stats.n_cell)


def fit_proto_knn(data: LabeledDataset, nuclei, k: int, space: MetricSpace) -> ProtoKNNModel:
    _require_classification(data)
    if not 1 <= k <= data.n:
        raise ValueError(f"k={k} out of range [1, {data.n}]")
    partition = build_partition(space, nuclei)
    counts = neighbor_label_counts(space, data.points, data.onehot(), partition.nuclei, k)
    return ProtoKNNModel(partition, counts, k)


def fit_knn(data: LabeledDataset, k: int, space: MetricSpace) -> KNNModel:
    return KNNModel(space, data, k)


def predict_knn(data: LabeledDataset, x, k: int, space: MetricSpace):
    """Label and posterior vector of the k-NN rule at a single point."""
    _require_classification(data)
    nb = k_nearest(space, data.points, x, k)
    counts = np.bincount(data.labels[nb.indices] - 1, minlength=data.n_classes)
    return int(np.argmax(counts)) + 1, counts / k


def predict(model, x):
    """Class label of a single point under any fitted classifier."""
    return model.predict_one(x)


def build_gamma_net(points, gamma: float, space: MetricSpace) -> np.ndarray:
    """Indices of a greedy gamma-net: scan in index order, keep points at distance >= gamma from all kept."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    n = npoints(points)
    if n == 0:
        raise ValueError("cannot build a net over no points")
    kept = [0]
    for i in range(1, n):
        if space.to_many(points[i], take(points, kept)).min() >= gamma:
            kept.append(i)
    return np.array(kept, dtype=np.intp)


def diameter(points, space: MetricSpace) -> float:
    n = npoints(points)
    best = 0.0
    step = max(1, 2_000_000 // max(1, n))
    for s in range(0, n, step):
        best = max(best, float(space.pairwise(take(points, np.arange(s, min(n, s + step))), points).max()))
    return best


def gamma_grid(points, space: MetricSpace) -> list[float]:
    """Scales diam * 2^-i for i = 0..ceil(log2 n)."""
    n = npoints(points)
    diam = diameter(points, space)
    if diam == 0:
        return [1.0]
    return [diam * 2.0 ** -i for i in range(math.ceil(math.log2(max(n, 2))) + 1)]


def fit_optinet_lite(train: LabeledDataset, holdout: LabeledDataset, gammas, space: MetricSpace) -> GammaNetModel:
    """Pick the net scale with the lowest hold-out 0-1 error (smallest gamma on ties)."""
    _require_classification(train)
    if gammas is None:
        gammas = gamma_grid(train.points, space)
    gammas = sorted(float(g) for g in gammas)
    if not gammas:
        raise ValueError("no candidate gamma values")
    if holdout.n == 0:
        raise ValueError("empty hold-out set")
    best = None
    errors = {}
    for g in gammas:
        net = build_gamma_net(train.points, g, space)
        proto = fit_proto_nn(train, take(train.points, net), space)
        err = float(np.mean(proto.predict(holdout.points) != holdout.labels))
        errors[g] = err
        if best is None or err < best[0]:
            best = (err, g, net, proto)
    _, g, net, proto = best
    return GammaNetModel(g, net, proto, errors)


def select_m_holdout(train: LabeledDataset, holdout: LabeledDataset, nuclei_pool, m_grid, space: MetricSpace):
    """Hold-out choice of the nucleus count for Proto-NN, using prefixes of ``nuclei_pool``.

    Returns ``(m, model, errors)``; ties go to the smallest m.
    """
    m_grid = sorted(int(m) for m in m_grid)
    if not m_grid or m_grid[0] < 1 or m_grid[-1] > npoints(nuclei_pool):
        raise ValueError("m grid must be non-empty and within the nucleus pool size")
    best, errors = None, {}
    for m in m_grid:
        model = fit_proto_nn(train, take(nuclei_pool, np.arange(m)), space)
        err = float(np.mean(model.predict(holdout.points) != holdout.labels))
        errors[m] = err
        if best is None or err < best[0]:
            best = (err, m, model)
    return best[1], best[2], errors


def fit_partition_regressor(data: LabeledDataset, nuclei, space: MetricSpace) -> PartitionRegressor:
    if data.is_classification:
        raise ValueError("regressor fitted on classification-mode data")
    partition = build_partition(space, nuclei)
    stats = tally(partition, data.points, data.labels)
    means = _ratio(stats.label_sums[:, None], stats.n_cell)[:, 0]
    # the exact mean lies in [min, max]; clipping only removes rounding overshoot
    means = np.clip(means, stats.label_min, stats.label_max)
    return PartitionRegressor(partition, means, stats.n_cell, data.n)


def predict_regression(model: PartitionRegressor, x, truncated: bool = False) -> float:
    return model.predict_one(x, truncated)


# ---------------------------------------------------------------------------
# default schedules


def proto_nn_m(n: int) -> int:
    return math.ceil(math.sqrt(n))


def knn_k(n: int, beta: float = 1.0, d: int = 1) -> int:
    """floor(n^(2 beta / (2 beta + d))), at least 1.

    Powers within 1e-12 (relative) of an integer count as that integer, so
    4096^(2/3) gives 256 rather than 255.
    """
    v = n ** (2 * beta / (2 * beta + d))
    r = round(v)
    if abs(v - r) <= 1e-12 * max(1.0, v):
        v = r
    return max(1, math.floor(v))


def proto_knn_m(n: int, k: int) -> int:
    return math.ceil(n / k)
