"""Exact check of the plug-in excess-risk decomposition on finite supports.

For a plug-in rule g_n(x) = argmax_j P_{n,j}(x) the expected excess risk is
bounded by sum_{j,l} J_{n,j,l} with

    J_{n,j,l} = sum_x mu(x) D_l(x) 1{l != g*(x)} P{|P_{n,j}(x) - P_j(x)| >= D_l(x)/M},
    D_l(x)    = P_{g*(x)}(x) - P_l(x).

Here the training positions and nuclei are fixed and the expectation runs
over the labels, each drawn from the posterior at its position.  Every
probability is a :class:`fractions.Fraction`, so both sides are exact.

All supported rules estimate P_{n,j}(x) as (class counts over an index set
S(x)) / (denominator), so the law of the estimate at x follows from the
distribution of the count vector over S(x), obtained by exact convolution.
``enumerate_labels`` is the brute-force alternative that refits a library
model for every one of the M^n label patterns.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .metric import TableSpace
from .models import LabeledDataset, fit_knn, fit_proto_knn, fit_proto_nn
from .neighbors import k_nearest
from .partition import build_partition

MAX_SUPPORT, MAX_CLASSES, MAX_N = 8, 4, 12


@dataclass
class FiniteSpec:
    """A distribution on finitely many named points with rational probabilities."""

    space: TableSpace
    mu: list
    posterior: list  # posterior[x][j], rows summing to 1

    def __post_init__(self):
        self.mu = [Fraction(p) for p in self.mu]
        self.posterior = [[Fraction(p) for p in row] for row in self.posterior]
        s = len(self.space.symbols)
        if len(self.mu) != s or len(self.posterior) != s:
            raise ValueError("mu and posterior must cover every support point")
        if sum(self.mu) != 1 or any(p < 0 for p in self.mu):
            raise ValueError("mu must be a probability vector")
        M = len(self.posterior[0])
        for row in self.posterior:
            if len(row) != M or sum(row) != 1 or any(p < 0 for p in row):
                raise ValueError("every posterior row must be a probability vector of length M")

    @property
    def support(self) -> list[str]:
        return self.space.symbols

    @property
    def n_classes(self) -> int:
        return len(self.posterior[0])

    def bayes_label(self, x: int) -> int:
        row = self.posterior[x]
        return row.index(max(row))


def _argmax(values) -> int:
    best = 0
    for j, v in enumerate(values):
        if v > values[best]:
            best = j
    return best


# ---------------------------------------------------------------------------
# rules: for query x (support index) return (S(x) as training indices, denominator)


@dataclass(frozen=True)
class ProtoNNRule:
    nuclei: tuple  # support indices

    def name(self):
        return "proto_nn"

    def neighborhood(self, spec, positions, x):
        sym = spec.support
        part = build_partition(spec.space, [sym[i] for i in self.nuclei])
        cell = part.assign_cell(sym[x])
        cells = part.assign([sym[p] for p in positions])
        S = [i for i, c in enumerate(cells) if c == cell]
        return S, len(S)

    def fit(self, spec, data):
        return fit_proto_nn(data, [spec.support[i] for i in self.nuclei], spec.space)


@dataclass(frozen=True)
class KNNRule:
    k: int

    def name(self):
        return "knn"

    def neighborhood(self, spec, positions, x):
        sym = spec.support
        nb = k_nearest(spec.space, [sym[p] for p in positions], sym[x], self.k)
        return [int(i) for i in nb.indices], self.k

    def fit(self, spec, data):
        return fit_knn(data, self.k, spec.space)


@dataclass(frozen=True)
class ProtoKNNRule:
    nuclei: tuple
    k: int

    def name(self):
        return "proto_knn"

    def neighborhood(self, spec, positions, x):
        sym = spec.support
        part = build_partition(spec.space, [sym[i] for i in self.nuclei])
        nucleus = self.nuclei[part.assign_cell(sym[x])]
        nb = k_nearest(spec.space, [sym[p] for p in positions], sym[nucleus], self.k)
        return [int(i) for i in nb.indices], self.k

    def fit(self, spec, data):
        return fit_proto_knn(data, [spec.support[i] for i in self.nuclei], self.k, spec.space)


@dataclass(frozen=True)
class ExactRule:
    """P_{n,j} = P_j: the estimate carries no error."""

    def name(self):
        return "exact"


def count_distribution(label_laws: list[list[Fraction]]) -> dict[tuple, Fraction]:
    """Law of the class-count vector of independent labels with the given laws."""
    M = len(label_laws[0]) if label_laws else 0
    dist = {(0,) * M: Fraction(1)}
    for law in label_laws:
        nxt: dict[tuple, Fraction] = {}
        for counts, p in dist.items():
            for j, q in enumerate(law):
                if q:
                    c = counts[:j] + (counts[j] + 1,) + counts[j + 1:]
                    nxt[c] = nxt.get(c, Fraction(0)) + p * q
        dist = nxt
    return dist


def estimate_law(spec: FiniteSpec, positions, rule, x: int) -> list[tuple[Fraction, list[Fraction]]]:
    """[(probability, estimate vector)] for the estimate at support point x."""
    M = spec.n_classes
    if isinstance(rule, ExactRule):
        return [(Fraction(1), list(spec.posterior[x]))]
    S, denom = rule.neighborhood(spec, positions, x)
    if not S:
        return [(Fraction(1), [Fraction(0)] * M)]
    dist = count_distribution([spec.posterior[positions[i]] for i in S])
    if not dist:  # M == 0 cannot happen for valid specs
        return []
    return [(p, [Fraction(c, denom) for c in counts]) for counts, p in dist.items()]


@dataclass
class DecompositionReport:
    excess: Fraction
    J: list  # J[j][l]
    gaps: list  # gaps[x][l] = P_{g*(x)}(x) - P_l(x)
    bound: Fraction = field(init=False)

    def __post_init__(self):
        self.bound = sum((v for row in self.J for v in row), Fraction(0))

    @property
    def holds(self) -> bool:
        return self.excess <= self.bound


def _check_limits(spec: FiniteSpec, positions):
    if len(spec.support) > MAX_SUPPORT or spec.n_classes > MAX_CLASSES or len(positions) > MAX_N:
        raise ValueError(f"exhaustive check limited to |support| <= {MAX_SUPPORT}, "
                         f"M <= {MAX_CLASSES}, n <= {MAX_N}")


def _report_from_laws(spec: FiniteSpec, laws) -> DecompositionReport:
    M = spec.n_classes
    excess = Fraction(0)
    J = [[Fraction(0)] * M for _ in range(M)]
    gaps = []
    for x, law in enumerate(laws):
        P = spec.posterior[x]
        g_star = spec.bayes_label(x)
        gap = [P[g_star] - P[l] for l in range(M)]
        gaps.append(gap)
        w = spec.mu[x]
        for prob, est in law:
            excess += w * prob * (P[g_star] - P[_argmax(est)])
        for l in range(M):
            if l == g_star or gap[l] == 0:
                continue
            thr = gap[l] / M
            for j in range(M):
                tail = sum((prob for prob, est in law if abs(est[j] - P[j]) >= thr), Fraction(0))
                J[j][l] += w * gap[l] * tail
    return DecompositionReport(excess, J, gaps)


def verify_decomposition(spec: FiniteSpec, positions, rule) -> DecompositionReport:
    """Exact excess risk and J terms for a count-based plug-in rule."""
    positions = list(positions)
    _check_limits(spec, positions)
    laws = [estimate_law(spec, positions, rule, x) for x in range(len(spec.support))]
    return _report_from_laws(spec, laws)


def enumerate_labels(spec: FiniteSpec, positions, rule, max_patterns: int = 1 << 16) -> DecompositionReport:
    """Same report by refitting the library model on all M^n label patterns."""
    positions = list(positions)
    _check_limits(spec, positions)
    M, n = spec.n_classes, len(positions)
    if M**n > max_patterns:
        raise ValueError(f"{M}^{n} label patterns exceed the enumeration budget")
    sym = spec.support
    points = [sym[p] for p in positions]
    laws: list[dict] = [dict() for _ in sym]
    for pattern in itertools.product(range(M), repeat=n):
        prob = math.prod((spec.posterior[positions[i]][y] for i, y in enumerate(pattern)), start=Fraction(1))
        if not prob:
            continue
        if isinstance(rule, ExactRule):
            ests = [tuple(spec.posterior[x]) for x in range(len(sym))]
        else:
            model = rule.fit(spec, LabeledDataset(points, np.array(pattern) + 1, M))
            counts, denom = model.posterior_counts(list(sym))
            ests = [tuple(Fraction(int(c), int(d)) if d else Fraction(0) for c in row)
                    for row, d in zip(counts, denom)]
            labels = model.predict(list(sym))
            if any(int(g) != _argmax(e) + 1 for g, e in zip(labels, ests)):
                raise AssertionError("model prediction disagrees with the argmax of its own estimate")
        for x, est in enumerate(ests):
            laws[x][est] = laws[x].get(est, Fraction(0)) + prob
    return _report_from_laws(spec, [[(p, list(e)) for e, p in law.items()] for law in laws])


def random_metric_table(n_points: int, rng: np.random.Generator, max_weight: int = 6) -> np.ndarray:
    """Shortest-path closure of random positive integer weights: a metric with frequent ties."""
    W = rng.integers(1, max_weight + 1, size=(n_points, n_points)).astype(np.float64)
    W = np.minimum(W, W.T)
    np.fill_diagonal(W, 0.0)
    for k in range(n_points):
        W = np.minimum(W, W[:, k:k + 1] + W[k:k + 1, :])
    return W


def _random_probs(rng, size, denom=12, allow_zero=True):
    w = rng.integers(0 if allow_zero else 1, denom + 1, size=size)
    if w.sum() == 0:
        w[rng.integers(size)] = 1
    total = int(w.sum())
    return [Fraction(int(v), total) for v in w]


def random_instance(rng: np.random.Generator):
    """A random (spec, positions, rule) within the exhaustive-check limits."""
    s = int(rng.integers(2, MAX_SUPPORT + 1))
    M = int(rng.integers(2, MAX_CLASSES + 1))
    n = int(rng.integers(1, MAX_N + 1))
    space = TableSpace([f"p{i}" for i in range(s)], random_metric_table(s, rng))
    mu = _random_probs(rng, s, allow_zero=False)
    post = []
    for _ in range(s):
        if rng.random() < 0.2:
            post.append([Fraction(1, M)] * M)  # forces Bayes ties
        else:
            post.append(_random_probs(rng, M))
    spec = FiniteSpec(space, mu, post)
    positions = [int(p) for p in rng.integers(0, s, size=n)]
    kind = rng.integers(0, 3)
    nuclei = tuple(int(v) for v in rng.integers(0, s, size=int(rng.integers(1, s + 1))))
    k = int(rng.integers(1, n + 1))
    rule = (ProtoNNRule(nuclei), KNNRule(k), ProtoKNNRule(nuclei, k))[kind]
    return spec, positions, rule
