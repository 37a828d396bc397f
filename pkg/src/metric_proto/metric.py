"""Metric spaces over opaque point universes.

Every space exposes three views of the same distance: ``distance(a, b)`` for
a single pair, ``to_many(q, points)`` for one query against a collection and
``pairwise(A, B)`` for two collections.  All three are computed by the same
floating-point kernel so that they agree bit for bit; exact tie-breaking in
the neighbor search relies on this.

Point collections are 2-D float arrays for vector metrics, lists of strings
for the edit and table metrics, and :class:`Lifted` for augmented spaces.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np


class MetricAxiomError(ValueError):
    """A distance table violates one of the metric axioms."""


class UniverseError(ValueError):
    """A point does not belong to the space's point universe."""


def npoints(points) -> int:
    return len(points)


def take(points, idx):
    """Sub-collection of ``points`` at integer positions ``idx``."""
    idx = np.asarray(idx, dtype=np.intp)
    if isinstance(points, np.ndarray):
        return points[idx]
    if isinstance(points, Lifted):
        return Lifted(take(points.base, idx), points.u[idx])
    return [points[i] for i in idx]


def concat(a, b):
    if isinstance(a, np.ndarray):
        return np.concatenate([a, b])
    if isinstance(a, Lifted):
        return Lifted(concat(a.base, b.base), np.concatenate([a.u, b.u]))
    return list(a) + list(b)


class MetricSpace:
    """Abstract distance oracle; subclasses implement ``_pairwise``."""

    name = "abstract"

    def coerce(self, points):
        """Normalize a collection into this space's storage form."""
        return list(points)

    def coerce_point(self, x):
        return x

    def distance(self, a, b) -> float:
        return float(self.to_many(a, self.single(b))[0])

    def single(self, x):
        """Collection holding just ``x``."""
        return [x]

    def to_many(self, q, points) -> np.ndarray:
        return self.pairwise(self.single(q), points)[0]

    def pairwise(self, A, B) -> np.ndarray:
        raise NotImplementedError

    def descriptor(self) -> str:
        return self.name

    def __repr__(self):
        return f"{type(self).__name__}({self.descriptor()!r})"


class LpSpace(MetricSpace):
    """Real vectors of a fixed dimension under an l_p norm, p >= 1."""

    def __init__(self, p: float = 2.0):
        if not p >= 1:
            raise ValueError(f"l_p exponent must be >= 1, got {p}")
        self.p = float(p)
        self.name = "euclidean" if self.p == 2.0 else f"lp:{self.p:g}"

    def coerce(self, points):
        arr = np.asarray(points, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise UniverseError(f"expected an (n, d) array of points, got shape {arr.shape}")
        return arr

    def coerce_point(self, x):
        return np.atleast_1d(np.asarray(x, dtype=np.float64))

    def single(self, x):
        return self.coerce_point(x)[None, :]

    def _reduce(self, diff: np.ndarray) -> np.ndarray:
        if self.p == 2.0:
            return np.sqrt((diff * diff).sum(axis=-1))
        if self.p == 1.0:
            return np.abs(diff).sum(axis=-1)
        return (np.abs(diff) ** self.p).sum(axis=-1) ** (1.0 / self.p)

    def _check(self, A, B):
        if A.shape[1] != B.shape[1]:
            raise UniverseError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")

    def distance(self, a, b) -> float:
        a, b = self.coerce_point(a), self.coerce_point(b)
        if a.shape != b.shape:
            raise UniverseError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
        return float(self._reduce((a - b)[None, :])[0])

    def to_many(self, q, points) -> np.ndarray:
        q = self.coerce_point(q)
        points = self.coerce(points)
        self._check(q[None, :], points)
        return self._reduce(points - q[None, :]) if len(points) else np.empty(0)

    def pairwise(self, A, B) -> np.ndarray:
        A, B = self.coerce(A), self.coerce(B)
        self._check(A, B)
        out = np.empty((len(A), len(B)))
        if not len(A) or not len(B):
            return out
        # bounded temporaries: rows of A in chunks
        step = max(1, 2_000_000 // max(1, len(B) * A.shape[1]))
        for s in range(0, len(A), step):
            out[s:s + step] = self._reduce(B[None, :, :] - A[s:s + step, None, :])
        return out


def EuclideanSpace() -> LpSpace:
    return LpSpace(2.0)


class DiscreteSpace(MetricSpace):
    """0/1 metric: distinct points are at distance one."""

    name = "discrete"

    def coerce(self, points):
        if isinstance(points, np.ndarray):
            return points if points.ndim == 2 else points[:, None]
        return list(points)

    def single(self, x):
        if isinstance(x, np.ndarray):
            return np.atleast_1d(x)[None, :]
        return [x]

    def distance(self, a, b) -> float:
        if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
            return float(bool(np.any(np.atleast_1d(a) != np.atleast_1d(b))))
        return 0.0 if a == b else 1.0

    def pairwise(self, A, B) -> np.ndarray:
        A, B = self.coerce(A), self.coerce(B)
        if isinstance(A, np.ndarray) and isinstance(B, np.ndarray):
            return np.any(A[:, None, :] != B[None, :, :], axis=-1).astype(np.float64)
        return np.array([[0.0 if a == b else 1.0 for b in B] for a in A]).reshape(len(A), len(B))


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance (insert, delete, substitute)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


class EditSpace(MetricSpace):
    """Strings under Levenshtein distance."""

    name = "edit"

    def coerce(self, points):
        pts = list(points)
        for p in pts:
            if not isinstance(p, str):
                raise UniverseError(f"edit metric expects strings, got {type(p).__name__}")
        return pts

    def distance(self, a, b) -> float:
        if not isinstance(a, str) or not isinstance(b, str):
            raise UniverseError("edit metric expects strings")
        return float(levenshtein(a, b))

    def pairwise(self, A, B) -> np.ndarray:
        A, B = self.coerce(A), self.coerce(B)
        return np.array([[float(levenshtein(a, b)) for b in B] for a in A]).reshape(len(A), len(B))


class TableSpace(MetricSpace):
    """Finite catalog of named symbols with a tabulated distance matrix."""

    def __init__(self, symbols: Sequence[str], matrix, source: str | None = None, validate: bool = True):
        self.symbols = [str(s) for s in symbols]
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.source = source
        self._index = {s: i for i, s in enumerate(self.symbols)}
        if len(self._index) != len(self.symbols):
            raise MetricAxiomError("duplicate symbol names in distance table")
        if self.matrix.shape != (len(self.symbols), len(self.symbols)):
            raise MetricAxiomError(
                f"table is {self.matrix.shape}, expected {len(self.symbols)}x{len(self.symbols)}")
        if validate:
            validate_metric_matrix(self.matrix)
        self.name = f"table:{source}" if source else "table"

    @classmethod
    def from_csv(cls, path) -> "TableSpace":
        path = Path(path)
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        if not rows:
            raise MetricAxiomError(f"{path}: empty distance table")
        cols = [c.strip() for c in rows[0][1:]]
        names, values = [], []
        for r in rows[1:]:
            names.append(r[0].strip())
            try:
                values.append([float(v) for v in r[1:]])
            except ValueError as exc:
                raise MetricAxiomError(f"{path}: non-numeric entry ({exc})") from None
        if names != cols:
            raise MetricAxiomError(f"{path}: row labels {names} do not match header {cols}")
        if any(len(v) != len(cols) for v in values):
            raise MetricAxiomError(f"{path}: ragged distance table")
        return cls(cols, np.array(values).reshape(len(cols), len(cols)), source=str(path))

    def indices(self, points) -> np.ndarray:
        try:
            return np.fromiter((self._index[p] for p in points), dtype=np.intp, count=len(points))
        except KeyError as exc:
            raise UniverseError(f"unknown symbol {exc.args[0]!r}") from None

    def coerce(self, points):
        pts = [str(p) for p in points]
        self.indices(pts)
        return pts

    def distance(self, a, b) -> float:
        i, j = self.indices([a, b])
        return float(self.matrix[i, j])

    def pairwise(self, A, B) -> np.ndarray:
        return self.matrix[np.ix_(self.indices(list(A)), self.indices(list(B)))]


def validate_metric_matrix(D: np.ndarray, tol: float = 1e-12) -> None:
    """Raise :class:`MetricAxiomError` unless ``D`` is a (true) metric."""
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise MetricAxiomError("distance table must be square")
    if not np.all(np.isfinite(D)):
        raise MetricAxiomError("distance table has non-finite entries")
    if np.any(np.diag(D) != 0):
        raise MetricAxiomError("nonzero self-distance")
    if np.any(D < 0):
        raise MetricAxiomError("negative distance")
    if not np.array_equal(D, D.T):
        raise MetricAxiomError("distance table is not symmetric")
    off = ~np.eye(len(D), dtype=bool)
    if np.any(D[off] <= 0):
        raise MetricAxiomError("distinct symbols at distance zero (pseudo-metric)")
    # D[i,k] <= D[i,j] + D[j,k] for all j
    slack = tol * max(1.0, float(D.max(initial=0.0)))
    for j in range(len(D)):
        if np.any(D > D[:, j:j + 1] + D[j:j + 1, :] + slack):
            raise MetricAxiomError("triangle inequality violated")


# splitmix64 finalizer constants
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def counter_uniforms(seed: int, start: int, count: int) -> np.ndarray:
    """Uniform[0,1) draws keyed by (seed, index); index ``i`` always maps to the same value."""
    with np.errstate(over="ignore"):
        key = np.uint64(seed % 2**64) * _GOLDEN + _MIX1
        z = np.arange(start, start + count, dtype=np.uint64) * _GOLDEN + key
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass
class Lifted:
    """Points of an augmented space: base points plus a u-coordinate each."""

    base: Any
    u: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __len__(self):
        return len(self.u)

    def __getitem__(self, i):
        return (self.base[i], float(self.u[i]))


class AugmentedSpace(MetricSpace):
    """Base space with a randomized coordinate: d((x,u),(z,v)) = d(x,z) + delta*|u-v|.

    The extra coordinate makes exact distance ties a probability-zero event,
    whatever the base metric.
    """

    def __init__(self, base: MetricSpace, delta: float, seed: int = 0):
        if not delta > 0:
            raise ValueError(f"delta must be positive, got {delta}")
        if isinstance(base, AugmentedSpace):
            raise ValueError("cannot augment an augmented space")
        self.base = base
        self.delta = float(delta)
        self.seed = int(seed)
        self.name = base.descriptor()

    def descriptor(self) -> str:
        return self.base.descriptor()

    def lift(self, points, offset: int = 0, seed: int | None = None) -> Lifted:
        """Attach u-coordinates to ``points``; point ``i`` gets the draw at ``offset + i``."""
        points = self.base.coerce(points)
        u = counter_uniforms(self.seed if seed is None else seed, offset, len(points))
        return Lifted(points, u)

    def coerce(self, points):
        if isinstance(points, Lifted):
            return points
        if isinstance(points, (list, tuple)) and points and isinstance(points[0], tuple):
            return Lifted(self.base.coerce([p[0] for p in points]), np.array([p[1] for p in points], dtype=float))
        raise UniverseError("augmented space expects lifted points (x, u)")

    def single(self, x):
        base_pt, u = x
        return Lifted(self.base.single(base_pt), np.array([float(u)]))

    def distance(self, a, b) -> float:
        return float(self.to_many(a, self.single(b))[0])

    def to_many(self, q, points) -> np.ndarray:
        points = self.coerce(points)
        base_pt, u = q
        return self.base.to_many(base_pt, points.base) + self.delta * np.abs(points.u - float(u))

    def pairwise(self, A, B) -> np.ndarray:
        A, B = self.coerce(A), self.coerce(B)
        return self.base.pairwise(A.base, B.base) + self.delta * np.abs(A.u[:, None] - B.u[None, :])


def augment(space: MetricSpace, delta: float, rng_seed: int = 0) -> AugmentedSpace:
    return AugmentedSpace(space, delta, rng_seed)


def default_delta(space: MetricSpace, pilot) -> float:
    """1e-6 times the median pairwise distance of (up to) 100 pilot points."""
    pilot = take(pilot, np.arange(min(100, npoints(pilot))))
    D = space.pairwise(pilot, pilot)
    off = D[np.triu_indices(len(D), k=1)]
    med = float(np.median(off)) if off.size else 0.0
    return 1e-6 * med if med > 0 else 1e-6


def parse_metric(config: str) -> MetricSpace:
    """Build a space from ``euclidean``, ``lp:<p>``, ``discrete``, ``edit`` or ``table:<path>``."""
    kind, _, arg = config.strip().partition(":")
    kind = kind.lower()
    if kind == "euclidean" and not arg:
        return LpSpace(2.0)
    if kind == "lp":
        try:
            return LpSpace(float(arg))
        except ValueError:
            raise ValueError(f"bad l_p exponent in {config!r}") from None
    if kind == "discrete" and not arg:
        return DiscreteSpace()
    if kind == "edit" and not arg:
        return EditSpace()
    if kind == "table" and arg:
        return TableSpace.from_csv(arg)
    raise ValueError(f"unknown metric {config!r}")
