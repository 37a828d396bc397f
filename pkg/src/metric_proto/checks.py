"""Property and oracle battery run by ``metric-proto verify``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import decomposition as dec
from .metric import (
    AugmentedSpace,
    DiscreteSpace,
    EditSpace,
    LpSpace,
    MetricSpace,
    TableSpace,
    take,
)
from .models import LabeledDataset, build_gamma_net, fit_partition_regressor, fit_proto_nn
from .neighbors import PivotIndex, k_nearest
from .synthetic import (
    PowerH,
    check_generalized_lipschitz,
    check_margin,
    integrate_bayes_risk,
    bayes_risk,
    parse_family,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}" + (f"  ({self.detail})" if self.detail else "")


# ---------------------------------------------------------------------------
# random point generators per metric


def _strings(rng, n, alphabet="abc", max_len=6):
    return ["".join(rng.choice(list(alphabet), size=int(rng.integers(0, max_len + 1)))) for _ in range(n)]


def metric_samplers(rng: np.random.Generator) -> dict[str, tuple[MetricSpace, Callable[[int], object]]]:
    """Built-in spaces with a generator of random points for each."""
    table = TableSpace([f"s{i}" for i in range(8)], dec.random_metric_table(8, rng))
    aug_e = AugmentedSpace(LpSpace(2.0), 0.5, seed=int(rng.integers(2**31)))
    aug_d = AugmentedSpace(DiscreteSpace(), 0.1, seed=int(rng.integers(2**31)))
    return {
        "euclidean": (LpSpace(2.0), lambda n: rng.normal(size=(n, 3))),
        "lp:1": (LpSpace(1.0), lambda n: rng.normal(size=(n, 3))),
        "lp:3": (LpSpace(3.0), lambda n: rng.normal(size=(n, 3))),
        "discrete": (DiscreteSpace(), lambda n: rng.integers(0, 3, size=(n, 2)).astype(float)),
        "edit": (EditSpace(), lambda n: _strings(rng, n)),
        "table": (table, lambda n: [table.symbols[i] for i in rng.integers(0, 8, size=n)]),
        "augmented-euclidean": (aug_e, lambda n: aug_e.lift(rng.normal(size=(n, 2)), offset=int(rng.integers(2**40)))),
        "augmented-discrete": (aug_d, lambda n: aug_d.lift(rng.integers(0, 2, size=(n, 1)).astype(float),
                                                            offset=int(rng.integers(2**40)))),
    }


def metric_axioms(space: MetricSpace, points_a, points_b, points_c, tol: float = 1e-12) -> tuple[bool, str]:
    """Check the four axioms on aligned triples (a_i, b_i, c_i)."""
    n = len(points_a)
    dab = np.array([space.distance(points_a[i], points_b[i]) for i in range(n)])
    dba = np.array([space.distance(points_b[i], points_a[i]) for i in range(n)])
    dbc = np.array([space.distance(points_b[i], points_c[i]) for i in range(n)])
    dac = np.array([space.distance(points_a[i], points_c[i]) for i in range(n)])
    daa = np.array([space.distance(points_a[i], points_a[i]) for i in range(n)])
    scale = np.maximum(1.0, np.maximum(dab, np.maximum(dbc, dac)))
    problems = []
    if np.any(daa != 0):
        problems.append("identity")
    if np.any(dab < 0):
        problems.append("nonnegativity")
    if np.any(np.abs(dab - dba) > tol * scale):
        problems.append("symmetry")
    if np.any(dac > dab + dbc + tol * scale):
        problems.append("triangle")
    return not problems, ", ".join(problems) or f"{n} triples"


def check_metric_axioms(n_triples: int, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for name, (space, gen) in metric_samplers(rng).items():
        ok, detail = metric_axioms(space, gen(n_triples), gen(n_triples), gen(n_triples))
        out.append(CheckResult(f"metric axioms [{name}]", ok, detail))
    return out


def check_pruned_equals_brute(n_instances: int, seed: int = 0, max_n: int = 60) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for name, (space, gen) in metric_samplers(rng).items():
        bad = 0
        for _ in range(n_instances):
            n = int(rng.integers(1, max_n + 1))
            data = gen(n)
            index = PivotIndex(space, data)
            q = gen(1)[0]
            k = int(rng.integers(1, n + 1))
            if index.query(q, k) != k_nearest(space, data, q, k):
                bad += 1
        out.append(CheckResult(f"pruned k-NN == brute force [{name}]", bad == 0, f"{bad}/{n_instances} mismatches"))
    return out


def scratch_majority(space, nuclei, points, labels, M, x) -> int:
    """Cell majority recomputed directly from distances, no library neighbor code."""
    def cell(p):
        d = [space.distance(p, nuclei[i]) for i in range(len(nuclei))]
        return min(range(len(d)), key=lambda i: (d[i], i))

    c = cell(x)
    votes = [0] * M
    for i in range(len(labels)):
        if cell(points[i]) == c:
            votes[int(labels[i]) - 1] += 1
    return max(range(M), key=lambda j: (votes[j], -j)) + 1


def check_proto_nn_scratch(n_instances: int, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    space = LpSpace(2.0)
    bad = 0
    for _ in range(n_instances):
        n, m, M = int(rng.integers(1, 40)), int(rng.integers(1, 8)), int(rng.integers(2, 5))
        # coarse grid coordinates so distance ties actually occur
        pts = rng.integers(0, 4, size=(n, 2)).astype(float)
        nuc = rng.integers(0, 4, size=(m, 2)).astype(float)
        y = rng.integers(1, M + 1, size=n)
        model = fit_proto_nn(LabeledDataset(pts, y, M), nuc, space)
        probes = rng.integers(0, 4, size=(10, 2)).astype(float)
        pred = model.predict(probes)
        for p, g in zip(probes, pred):
            if scratch_majority(space, nuc, pts, y, M, p) != g:
                bad += 1
                break
    return CheckResult("Proto-NN == from-scratch cell majority", bad == 0, f"{bad}/{n_instances} mismatches")


def check_posterior_normalization(n_points: int = 10_000, seed: int = 0) -> list[CheckResult]:
    out = []
    for fam in ("purenoise:M=3", "noiseless:d=2", "margin:beta=1.0", "margin:beta=0.5", "linear", "simplex:d=2,M=3"):
        spec = parse_family(fam)
        X = spec.sample_x(n_points, np.random.default_rng(seed))
        P = spec.posterior(X)
        err = float(np.abs(P.sum(axis=1) - 1).max())
        ok = err <= 1e-12 and P.min() >= 0 and P.max() <= 1
        out.append(CheckResult(f"posterior normalization [{fam}]", ok, f"max |sum-1| = {err:.1e}"))
    return out


def check_margin_conditions(n_mc: int = 100_000, seed: int = 0) -> list[CheckResult]:
    t_grid = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0]
    rows = check_margin(parse_family("margin:beta=1.0"), t_grid, n_mc, seed)
    at_half = next(r for r in rows if r.t == 0.5)
    ok1 = not any(r.violated for r in rows) and abs(at_half.empirical - 0.5) <= 3 * at_half.stderr + 1e-12
    rows_noise = check_margin(parse_family("purenoise:M=3"), t_grid, n_mc, seed, alpha=1.0, c_star=1.0)
    ok2 = any(r.violated for r in rows_noise)
    rows_nl = check_margin(parse_family("noiseless:d=2"), t_grid, n_mc, seed)
    ok3 = not any(r.violated for r in rows_nl) and all(r.empirical == 0 for r in rows_nl if r.t < 1)
    return [
        CheckResult("margin condition holds [margin:beta=1.0]", ok1, f"CDF(0.5) = {at_half.empirical:.4f}"),
        CheckResult("margin condition flagged [purenoise, alpha=1]", ok2),
        CheckResult("margin condition holds [noiseless]", ok3),
    ]


def check_lipschitz_conditions(n_pairs: int = 1000, n_ball: int = 10_000, seed: int = 0) -> list[CheckResult]:
    lin = check_generalized_lipschitz(parse_family("linear"), n_pairs, n_ball, seed)
    noise = check_generalized_lipschitz(parse_family("purenoise:M=3"), n_pairs, n_ball, seed, h=PowerH(1.0, 1.0))
    nl_spec = parse_family("noiseless:d=2")
    rng = np.random.default_rng(seed)
    base = rng.random((200, 2))
    xs = base.copy()
    xs[:, 0] = 0.5 - 1e-3 * rng.random(200)
    zs = xs.copy()
    zs[:, 0] = 0.5 + 1e-3 * rng.random(200)
    nl = check_generalized_lipschitz(nl_spec, 0, n_ball, seed, h=PowerH(1.0, 1.0), pairs=(xs, zs))
    return [
        CheckResult("generalized Lipschitz holds [linear, h(s)=s]", lin.n_violations == 0,
                    f"{lin.n_violations}/{lin.n_pairs} flagged"),
        CheckResult("generalized Lipschitz holds [purenoise]", noise.n_violations == 0),
        CheckResult("generalized Lipschitz flagged across boundary [noiseless]", nl.n_violations == nl.n_pairs,
                    f"{nl.n_violations}/{nl.n_pairs} flagged"),
    ]


def gamma_net_ok(space, points, gamma) -> bool:
    net = build_gamma_net(points, gamma, space)
    npts = take(points, net)
    D = space.pairwise(npts, npts)
    sep = bool(np.all(D[~np.eye(len(net), dtype=bool)] >= gamma))
    cover = bool(np.all(space.pairwise(points, npts).min(axis=1) < gamma) or len(net) == len(points))
    # points that are themselves in the net are at distance 0 < gamma, so cover holds for them too
    return sep and cover


def check_gamma_nets(n_instances: int = 50, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_instances):
        pts = rng.random((int(rng.integers(1, 80)), 2))
        if not gamma_net_ok(LpSpace(2.0), pts, float(rng.uniform(0.01, 1.5))):
            bad += 1
    return CheckResult("gamma-net separation and maximality", bad == 0, f"{bad}/{n_instances} failures")


def check_decomposition(n_instances: int, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_instances):
        spec, pos, rule = dec.random_instance(rng)
        if not dec.verify_decomposition(spec, pos, rule).holds:
            bad += 1
    return CheckResult("excess <= sum J (exact rational)", bad == 0, f"{bad}/{n_instances} violations")


def check_analytic_anchors() -> list[CheckResult]:
    lin = integrate_bayes_risk(parse_family("linear"))[0]
    return [
        CheckResult("Bayes risk linear-1D = 0.25", abs(bayes_risk(parse_family("linear")) - 0.25) <= 1e-6
                    and abs(lin - 0.25) <= 1e-6, f"quadrature {lin!r}"),
        CheckResult("Bayes risk purenoise:M=3 = 2/3", bayes_risk(parse_family("purenoise:M=3")) == 2 / 3),
    ]


def check_truncation() -> CheckResult:
    space = LpSpace(2.0)
    # n = 10, ln 10 = 2.30: the cell near 0 holds 8 points, the one near 10 holds 2
    pts = np.array([[0.0]] * 8 + [[10.0]] * 2)
    y = np.array([1.0] * 8 + [5.0, 7.0])
    model = fit_partition_regressor(LabeledDataset(pts, y), np.array([[0.0], [10.0]]), space)
    ok = (model.predict_one([10.0], truncated=True) == 0.0 and model.predict_one([10.0]) == 6.0
          and model.predict_one([0.0], truncated=True) == 1.0)
    return CheckResult("truncated regressor zeroes cells below ln n", ok)


def run_battery(full: bool = False, seed: int = 0) -> list[CheckResult]:
    triples, instances, dec_n = (10_000, 1000, 100) if full else (1000, 100, 30)
    results = []
    results += check_metric_axioms(triples, seed)
    results += check_pruned_equals_brute(instances, seed)
    results.append(check_proto_nn_scratch(100 if full else 30, seed))
    results += check_posterior_normalization(seed=seed)
    results += check_margin_conditions(seed=seed)
    results += check_lipschitz_conditions(seed=seed)
    results.append(check_gamma_nets(seed=seed))
    results.append(check_decomposition(dec_n, seed))
    results += check_analytic_anchors()
    results.append(check_truncation())
    return results


def summarize(results) -> tuple[int, int]:
    passed = sum(r.passed for r in results)
    return passed, len(results) - passed


__all__ = ["CheckResult", "run_battery", "summarize", "metric_samplers", "metric_axioms"]
