"""Synthetic classification problems with closed-form posteriors.

Each :class:`DistributionSpec` couples a seeded sampler with its posterior
functions, so the Bayes classifier, the Bayes risk and the conditional risk
of any fitted rule can be computed without label noise.  Families also
declare the margin exponent (alpha, c*) and the smoothness function
h(s) = C* s^gamma they are known to satisfy, when known.

Families are selected by strings such as ``margin:beta=1.0``,
``simplex:d=2,M=3``, ``noiseless:d=2``, ``purenoise:M=3`` or ``linear``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.stats import qmc

from .metric import LpSpace, MetricSpace
from .models import LabeledDataset


@dataclass(frozen=True)
class PowerH:
    """h(s) = c_star * s**gamma on [0, 1]."""

    c_star: float
    gamma: float

    def __call__(self, s):
        return self.c_star * np.power(np.clip(s, 0.0, 1.0), self.gamma)

    def concave_on_grid(self, n: int = 1000) -> bool:
        """Midpoint check h((a+b)/2) >= (h(a)+h(b))/2 on adjacent grid points; a diagnostic, not a proof."""
        s = np.linspace(0.0, 1.0, n)
        mid = self((s[:-1] + s[1:]) / 2)
        return bool(np.all(mid >= (self(s[:-1]) + self(s[1:])) / 2 - 1e-15))


@dataclass(frozen=True)
class DistributionSpec:
    name: str
    dim: int
    n_classes: int
    sample_x: Callable[[int, np.random.Generator], np.ndarray] = field(repr=False)
    posterior: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    margin: tuple[float, float] | None = None
    lipschitz: PowerH | None = None
    closed_form_risk: float | None = None
    description: str = ""

    @property
    def space(self) -> MetricSpace:
        return LpSpace(2.0)

    def bayes_classifier(self, X) -> np.ndarray:
        return np.argmax(self.posterior(np.asarray(X, dtype=np.float64)), axis=1) + 1

    def theoretical_exponent(self) -> float | None:
        """Predicted log-log slope of the k-NN excess risk, -gamma(1+alpha)/(2 gamma+1)."""
        if self.margin is None or self.lipschitz is None:
            return None
        alpha, g = self.margin[0], self.lipschitz.gamma
        return -g * (1 + alpha) / (2 * g + 1)

    def knn_exponent(self) -> float:
        """Exponent of the default k-NN schedule k = floor(n^(2 gamma/(2 gamma+1)))."""
        g = self.lipschitz.gamma if self.lipschitz is not None else 1.0 / self.dim
        return 2 * g / (2 * g + 1)


class _BayesPredictor:
    def __init__(self, spec: DistributionSpec):
        self.spec = spec

    def predict(self, X):
        return self.spec.bayes_classifier(X)


def bayes_predictor(spec: DistributionSpec):
    """The Bayes rule g* wrapped as a model with ``predict``."""
    return _BayesPredictor(spec)


# ---------------------------------------------------------------------------
# families


def _uniform(d):
    return lambda n, rng: rng.random((n, d))


def purenoise(M: int = 3, d: int = 1) -> DistributionSpec:
    return DistributionSpec(
        f"purenoise:M={M},d={d}", d, M, _uniform(d),
        lambda X: np.full((len(X), M), 1.0 / M),
        margin=None, lipschitz=PowerH(1.0, 1.0),
        closed_form_risk=(M - 1) / M,
        description="uniform X, labels independent of X")


def noiseless(d: int = 2) -> DistributionSpec:
    def post(X):
        second = (X[:, 0] > 0.5).astype(np.float64)
        return np.column_stack([1.0 - second, second])

    return DistributionSpec(
        f"noiseless:d={d}", d, 2, _uniform(d), post,
        margin=(1.0, 1.0), lipschitz=None, closed_form_risk=0.0,
        description="uniform X, label 2 iff x1 > 1/2")


def margin_family(beta: float = 1.0) -> DistributionSpec:
    """P_1(x) = 1/2 + sgn(x-1/2)|2x-1|^beta / 2 on uniform [0,1].

    The gap |P_1 - P_2| = |2x-1|^beta has CDF t^(1/beta), giving margin
    exponent 1/beta with c* = 1.  Since the ball mass of radius r is at
    least r, h(s) = s^beta works for beta <= 1 and h(s) = beta*s above.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")

    def post(X):
        u = 2.0 * X[:, 0] - 1.0
        p1 = 0.5 + 0.5 * np.sign(u) * np.abs(u) ** beta
        return np.column_stack([p1, 1.0 - p1])

    h = PowerH(1.0, beta) if beta <= 1 else PowerH(beta, 1.0)
    return DistributionSpec(
        f"margin:beta={beta:g}", 1, 2, _uniform(1), post,
        margin=(1.0 / beta, 1.0), lipschitz=h,
        closed_form_risk=beta / (2.0 * (beta + 1.0)),
        description="1-D two-class family with margin exponent 1/beta")


def linear() -> DistributionSpec:
    return DistributionSpec(
        "linear", 1, 2, _uniform(1),
        lambda X: np.column_stack([X[:, 0], 1.0 - X[:, 0]]),
        margin=(1.0, 1.0), lipschitz=PowerH(1.0, 1.0), closed_form_risk=0.25,
        description="P_1(x) = x on uniform [0,1]")


def simplex(d: int = 2, M: int = 3, temp: float = 0.15) -> DistributionSpec:
    """Softmax of negative distances to M anchors placed on a circle (a segment when d = 1)."""
    anchors = np.full((M, d), 0.5)
    if d == 1:
        anchors[:, 0] = np.linspace(0.15, 0.85, M)
    else:
        ang = 2 * np.pi * np.arange(M) / M
        anchors[:, 0] += 0.35 * np.cos(ang)
        anchors[:, 1] += 0.35 * np.sin(ang)

    def post(X):
        dist = np.sqrt(((X[:, None, :] - anchors[None, :, :]) ** 2).sum(-1))
        z = -dist / temp
        z -= z.max(axis=1, keepdims=True)
        w = np.exp(z)
        return w / w.sum(axis=1, keepdims=True)

    return DistributionSpec(
        f"simplex:d={d},M={M}", d, M, _uniform(d), post,
        description="softmax of negative distances to M anchors")


FAMILIES = {
    "purenoise": (purenoise, {"M": int, "d": int}),
    "noiseless": (noiseless, {"d": int}),
    "margin": (margin_family, {"beta": float}),
    "linear": (linear, {}),
    "simplex": (simplex, {"d": int, "M": int, "temp": float}),
}


def parse_family(config: str) -> DistributionSpec:
    name, _, args = config.strip().partition(":")
    if name not in FAMILIES:
        raise ValueError(f"unknown family {name!r}; known: {', '.join(FAMILIES)}")
    factory, types = FAMILIES[name]
    kwargs = {}
    for item in filter(None, (a.strip() for a in args.split(","))):
        key, eq, val = item.partition("=")
        if not eq or key not in types:
            raise ValueError(f"bad parameter {item!r} for family {name!r}")
        kwargs[key] = types[key](val)
    return factory(**kwargs)


def list_families() -> list[tuple[str, str]]:
    out = []
    for name, (factory, types) in FAMILIES.items():
        params = ",".join(f"{k}=<{t.__name__}>" for k, t in types.items())
        out.append((f"{name}:{params}" if params else name, factory().description))
    return out


# ---------------------------------------------------------------------------
# operations


def sample(spec: DistributionSpec, n: int, seed) -> LabeledDataset:
    """n i.i.d. pairs; labels drawn from the posterior by inverse CDF."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    X = spec.sample_x(n, rng)
    cdf = np.cumsum(spec.posterior(X), axis=1)
    u = rng.random(n)
    y = 1 + (u[:, None] >= cdf[:, :-1]).sum(axis=1)
    return LabeledDataset(X, y, spec.n_classes)


def _bayes_integrand(spec):
    return lambda *x: 1.0 - float(spec.posterior(np.array([x], dtype=np.float64)).max())


def integrate_bayes_risk(spec: DistributionSpec, tol: float = 1e-6, qmc_points: int = 2**20, seed: int = 0):
    """E[1 - max_j P_j(X)] over the unit cube; returns (value, error estimate, method)."""
    f = _bayes_integrand(spec)
    d = spec.dim
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if d == 1:
                val, err = integrate.quad(f, 0.0, 1.0, epsabs=tol / 10, epsrel=0.0, limit=500)
                return val, err, "quad"
            if d <= 3:
                val, err = integrate.nquad(f, [[0.0, 1.0]] * d,
                                           opts={"epsabs": tol / 10, "epsrel": 0.0, "limit": 200})
                return val, err, "nquad"
        except integrate.IntegrationWarning as exc:
            raise RuntimeError(f"Bayes-risk quadrature did not converge: {exc}") from None
    # randomized QMC: 16 scrambled Sobol replicates
    reps = 16
    per = qmc_points // reps
    est = []
    for r in range(reps):
        pts = qmc.Sobol(d, scramble=True, seed=seed + r).random(per)
        est.append(float(np.mean(1.0 - spec.posterior(pts).max(axis=1))))
    return float(np.mean(est)), float(np.std(est, ddof=1) / math.sqrt(reps)), "rqmc"


def bayes_risk(spec: DistributionSpec) -> float:
    if spec.closed_form_risk is not None:
        return spec.closed_form_risk
    return integrate_bayes_risk(spec)[0]


@dataclass(frozen=True)
class MarginRow:
    t: float
    empirical: float
    stderr: float
    bound: float
    violated: bool


def posterior_gap(spec: DistributionSpec, X) -> np.ndarray:
    """P_(1)(x) - P_(2)(x), the gap between the two largest posteriors."""
    P = np.sort(spec.posterior(X), axis=1)
    return P[:, -1] - P[:, -2]


def check_margin(spec: DistributionSpec, t_grid, n_mc: int, seed, alpha=None, c_star=None) -> list[MarginRow]:
    """Monte-Carlo CDF of the posterior gap against c* t^alpha; flags excess beyond 3 standard errors."""
    if alpha is None or c_star is None:
        if spec.margin is None:
            raise ValueError(f"{spec.name} declares no margin parameters")
        alpha, c_star = spec.margin
    rng = np.random.default_rng(seed)
    gap = posterior_gap(spec, spec.sample_x(n_mc, rng))
    rows = []
    for t in t_grid:
        if not 0 < t <= 1:
            raise ValueError("t must lie in (0, 1]")
        F = float(np.mean(gap <= t))
        se = math.sqrt(F * (1 - F) / n_mc)
        bound = c_star * t**alpha
        rows.append(MarginRow(float(t), F, se, bound, F > bound + 3 * se))
    return rows


def wilson_upper(p_hat: np.ndarray, n: int, z: float = 3.0) -> np.ndarray:
    """Upper end of the Wilson score interval; stays positive when p_hat = 0."""
    z2 = z * z
    center = p_hat + z2 / (2 * n)
    half = z * np.sqrt(p_hat * (1 - p_hat) / n + z2 / (4 * n * n))
    return np.minimum(1.0, (center + half) / (1 + z2 / n))


@dataclass
class LipschitzReport:
    n_pairs: int
    lhs: np.ndarray
    ball_mass: np.ndarray
    bound: np.ndarray
    violated: np.ndarray

    @property
    def n_violations(self) -> int:
        return int(self.violated.sum())


def check_generalized_lipschitz(spec: DistributionSpec, n_pairs: int, n_ball_mc: int, seed,
                                h: PowerH | None = None, pairs=None) -> LipschitzReport:
    """Compare max_j |P_j(x) - P_j(z)| with h(mu(ball(x, rho(x,z)))) on sampled pairs.

    Ball masses are Monte-Carlo estimates from ``n_ball_mc`` draws of X; the
    bound uses h at the 3-sigma Wilson upper limit of each estimate.
    """
    h = h or spec.lipschitz
    if h is None:
        raise ValueError(f"{spec.name} declares no smoothness function h")
    rng = np.random.default_rng(seed)
    if pairs is None:
        xs, zs = spec.sample_x(n_pairs, rng), spec.sample_x(n_pairs, rng)
    else:
        xs, zs = (np.asarray(p, dtype=np.float64).reshape(-1, spec.dim) for p in pairs)
    ball = spec.sample_x(n_ball_mc, rng)
    space = spec.space
    r = np.sqrt(((xs - zs) ** 2).sum(axis=1))
    hits = np.empty(len(xs))
    step = max(1, 2_000_000 // n_ball_mc)
    for s in range(0, len(xs), step):
        D = space.pairwise(xs[s:s + step], ball)
        hits[s:s + step] = (D <= r[s:s + step, None]).sum(axis=1)
    mass = hits / n_ball_mc
    lhs = np.abs(spec.posterior(xs) - spec.posterior(zs)).max(axis=1)
    bound = h(wilson_upper(mass, n_ball_mc))
    return LipschitzReport(len(xs), lhs, mass, bound, lhs > bound)
