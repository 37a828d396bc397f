"""Monte-Carlo convergence experiments on synthetic families.

Risks are measured conditionally on each training draw through the known
posteriors: for test points x_1..x_T the estimate is the mean of
1 - P_{g(x)}(x).  The excess over the Bayes rule is estimated on the same
test points as the mean of P_{g*(x)}(x) - P_{g(x)}(x), which is zero
wherever the two rules agree.
"""

from __future__ import annotations

import ast
import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import stats

from .metric import AugmentedSpace, LpSpace, DiscreteSpace, augment, default_delta, parse_metric
from .models import (
    fit_knn,
    fit_optinet_lite,
    fit_proto_knn,
    fit_proto_nn,
)
from .synthetic import DistributionSpec, bayes_predictor, bayes_risk, parse_family, sample

CLASSIFIERS = ("knn", "proto_nn", "proto_knn", "optinet_lite", "bayes")
CSV_COLUMNS = ("n", "trial", "k", "m", "risk", "bayes_risk", "excess", "stderr")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# schedule expressions


def _snap(x: float) -> float:
    r = round(x)
    return float(r) if abs(x - r) <= 1e-12 * max(1.0, abs(x)) else x


def _pow(a, b):
    # n^(2/3) at n = 4096 evaluates to 255.99999999999997; snap near-integers
    return _snap(math.pow(a, b))


_FUNCS = {
    "floor": math.floor, "ceil": math.ceil, "pow": _pow, "sqrt": lambda x: _snap(math.sqrt(x)),
    "log": math.log, "log2": math.log2, "min": min, "max": max, "int": int, "round": round,
}
_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
          ast.Add, ast.Sub, ast.Mult, ast.Div, ast.FloorDiv, ast.Mod, ast.Pow, ast.USub, ast.UAdd)


@lru_cache(maxsize=None)
def _compile_schedule(expr: str):
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"bad schedule {expr!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ConfigError(f"schedule {expr!r}: {type(node).__name__} not allowed")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ConfigError(f"schedule {expr!r}: unknown function")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError(f"schedule {expr!r}: only numeric constants allowed")
    return compile(tree, "<schedule>", "eval")


def eval_schedule(expr: str, **names) -> int:
    """Evaluate a schedule such as ``floor(pow(n, 2/3))``; the result must be an integer."""
    code = _compile_schedule(expr)
    for node in ast.walk(ast.parse(expr, mode="eval")):
        if isinstance(node, ast.Name) and node.id not in _FUNCS and node.id not in names:
            raise ConfigError(f"schedule {expr!r}: unknown name {node.id!r}")
    try:
        val = eval(code, {"__builtins__": {}}, {**_FUNCS, **names})
    except (ArithmeticError, ValueError, TypeError) as exc:
        raise ConfigError(f"schedule {expr!r} failed at {names}: {exc}") from None
    if isinstance(val, float):
        if not val.is_integer():
            raise ConfigError(f"schedule {expr!r} gave non-integer {val} at {names}")
        val = int(val)
    return int(val)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    family: str
    classifier: str
    n_grid: list
    metric: str = "euclidean"
    delta: float | str | None = None
    k_schedule: str | None = None
    m_schedule: str | None = None
    trials: int = 10
    test_points: int = 10_000
    seed: int = 0
    holdout_fraction: float = 0.2

    def __post_init__(self):
        if self.classifier not in CLASSIFIERS:
            raise ConfigError(f"unknown classifier {self.classifier!r}; choose from {CLASSIFIERS}")
        try:
            spec = parse_family(self.family)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        try:
            base = parse_metric(self.metric)
        except (ValueError, OSError) as exc:
            raise ConfigError(str(exc)) from None
        if not isinstance(base, (LpSpace, DiscreteSpace)):
            raise ConfigError(f"metric {self.metric!r} cannot act on vector-valued synthetic data")
        self.n_grid = [int(n) for n in self.n_grid]
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError("n_grid must be non-empty and strictly increasing")
        if self.n_grid[0] < 1:
            raise ConfigError("training sizes must be positive")
        if self.trials < 1 or self.test_points < 2:
            raise ConfigError("need trials >= 1 and test_points >= 2")
        if self.delta is not None and self.delta != "auto" and not float(self.delta) > 0:
            raise ConfigError("delta must be positive, 'auto' or null")
        if self.classifier in ("knn", "proto_knn") and self.k_schedule is None:
            self.k_schedule = f"floor(pow(n, {spec.knn_exponent()!r}))"
        if self.m_schedule is None:
            if self.classifier == "proto_nn":
                self.m_schedule = "ceil(sqrt(n))"
            elif self.classifier == "proto_knn":
                self.m_schedule = "ceil(n/k)"
        for n in self.n_grid:
            self.schedule(n)

    def schedule(self, n: int) -> tuple[int, int]:
        """(k, m) at training size n; 0 marks a parameter the classifier does not use."""
        k = m = 0
        if self.classifier in ("knn", "proto_knn"):
            k = eval_schedule(self.k_schedule, n=n)
            if not 1 <= k <= n:
                raise ConfigError(f"k schedule gives k={k} at n={n}")
        if self.classifier in ("proto_nn", "proto_knn"):
            m = eval_schedule(self.m_schedule, n=n, k=k)
            if m < 1:
                raise ConfigError(f"m schedule gives m={m} at n={n}")
        if self.classifier == "optinet_lite" and n < 2:
            raise ConfigError("optinet_lite needs n >= 2 to hold out data")
        return k, m

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            obj = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_dict(obj)


# ---------------------------------------------------------------------------
# risk measurement


@dataclass(frozen=True)
class RiskEstimate:
    risk: float
    stderr: float


def _predict(model, X):
    return np.asarray(model.predict(X) if hasattr(model, "predict") else model(X))


def conditional_risk(spec: DistributionSpec, model, test_points: int, seed, space=None) -> RiskEstimate:
    """Rao-Blackwellized estimate of P{g(X) != Y | training data}: mean of 1 - P_{g(x)}(x)."""
    rng = np.random.default_rng(seed)
    X = spec.sample_x(test_points, rng)
    Xq = space.lift(X) if isinstance(space, AugmentedSpace) else X
    pred = _predict(model, Xq)
    loss = 1.0 - spec.posterior(X)[np.arange(len(X)), pred - 1]
    return RiskEstimate(float(loss.mean()), float(loss.std(ddof=1) / math.sqrt(len(loss))))


@dataclass(frozen=True)
class TrialRow:
    n: int
    trial: int
    k: int
    m: int
    risk: float
    bayes_risk: float
    excess: float
    stderr: float
    excess_stderr: float = 0.0


@lru_cache(maxsize=32)
def _family(name: str) -> DistributionSpec:
    return parse_family(name)


@lru_cache(maxsize=32)
def _bayes_risk(name: str) -> float:
    return bayes_risk(_family(name))


def trial_seeds(base_seed: int, n: int, trial: int):
    """Independent streams (training, nuclei, test, augmentation) for one trial."""
    return np.random.SeedSequence(base_seed, spawn_key=(n, trial)).spawn(4)


def fit_classifier(cfg: ExperimentConfig, spec: DistributionSpec, space, data, k: int, m: int, nuclei_seed):
    c = cfg.classifier
    if c == "bayes":
        return bayes_predictor(spec)
    if c == "knn":
        return fit_knn(data, k, space)
    if c in ("proto_nn", "proto_knn"):
        nuclei = spec.sample_x(m, np.random.default_rng(nuclei_seed))
        if isinstance(space, AugmentedSpace):
            nuclei = space.lift(nuclei, offset=data.n)
        if c == "proto_nn":
            return fit_proto_nn(data, nuclei, space)
        return fit_proto_knn(data, nuclei, k, space)
    # optinet_lite: hold out the last part of the sample
    n_hold = min(data.n - 1, max(1, round(cfg.holdout_fraction * data.n)))
    train = data.subset(np.arange(data.n - n_hold))
    holdout = data.subset(np.arange(data.n - n_hold, data.n))
    return fit_optinet_lite(train, holdout, None, space)


def run_trial(cfg: ExperimentConfig, n: int, trial: int) -> TrialRow:
    spec = _family(cfg.family)
    space = parse_metric(cfg.metric)
    s_train, s_nuc, s_test, s_aug = trial_seeds(cfg.seed, n, trial)
    k, m = cfg.schedule(n)
    data = sample(spec, n, s_train)
    aug_seed = int(s_aug.generate_state(1, np.uint64)[0] >> np.uint64(1))
    if cfg.delta is not None:
        delta = default_delta(space, data.points) if cfg.delta == "auto" else float(cfg.delta)
        space = augment(space, delta, aug_seed)
        data = type(data)(space.lift(data.points), data.labels, data.n_classes)
    model = fit_classifier(cfg, spec, space, data, k, m, s_nuc)

    X = spec.sample_x(cfg.test_points, np.random.default_rng(s_test))
    P = spec.posterior(X)
    if isinstance(space, AugmentedSpace) and cfg.classifier != "bayes":
        Xq = space.lift(X, offset=n + m)
    else:
        Xq = X
    pred = _predict(model, Xq)
    rows = np.arange(len(X))
    loss = 1.0 - P[rows, pred - 1]
    gap = P.max(axis=1) - P[rows, pred - 1]
    T = len(X)
    return TrialRow(n, trial, k, m, float(loss.mean()), _bayes_risk(cfg.family), float(gap.mean()),
                    float(loss.std(ddof=1) / math.sqrt(T)), float(gap.std(ddof=1) / math.sqrt(T)))


def _run_task(args):
    cfg_dict, n, trial = args
    return run_trial(ExperimentConfig(**cfg_dict), n, trial)


def worker_count() -> int:
    env = os.environ.get("METRIC_PROTO_THREADS")
    if env:
        return max(1, int(env))
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# sweeps and reports


@dataclass
class RiskReport:
    config: ExperimentConfig
    rows: list = field(default_factory=list)

    @property
    def grid(self) -> list[int]:
        return list(self.config.n_grid)

    def excess_by_n(self) -> dict[int, np.ndarray]:
        out = {n: [] for n in self.grid}
        for r in self.rows:
            out[r.n].append(r.excess)
        return {n: np.array(v) for n, v in out.items()}

    def mean_excess(self) -> np.ndarray:
        return np.array([v.mean() for v in self.excess_by_n().values()])

    def excess_sem(self) -> np.ndarray:
        """Standard error of the per-n mean excess across trials."""
        out = []
        for v in self.excess_by_n().values():
            out.append(v.std(ddof=1) / math.sqrt(len(v)) if len(v) > 1 else float("nan"))
        return np.array(out)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.n, r.trial, r.k, r.m] + [repr(v) for v in (r.risk, r.bayes_risk, r.excess, r.stderr)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def summary(self) -> dict:
        spec = _family(self.config.family)
        try:
            fit = fit_log_slope(self)
            slope, slope_se = fit.slope, fit.stderr
        except ValueError:
            slope = slope_se = None
        return {
            "slope": slope,
            "slope_stderr": slope_se,
            "theoretical_exponent": spec.theoretical_exponent(),
            "grid": self.grid,
            "mean_excess": self.mean_excess().tolist(),
        }


def rate_sweep(config: ExperimentConfig, workers: int | None = None) -> RiskReport:
    """Fit and score the configured classifier for every (n, trial); rows sorted by (n, trial)."""
    tasks = [(n, t) for n in config.n_grid for t in range(config.trials)]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(tasks) == 1:
        rows = [run_trial(config, n, t) for n, t in tasks]
    else:
        cfg_dict = asdict(config)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_task, [(cfg_dict, n, t) for n, t in tasks],
                                 chunksize=max(1, len(tasks) // (4 * workers))))
    rows.sort(key=lambda r: (r.n, r.trial))
    return RiskReport(config, rows)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    used: list
    excluded: list


def fit_log_slope(report, mean_excess=None) -> SlopeFit:
    """OLS slope of log(mean excess) against log(n).

    Accepts a :class:`RiskReport` or a grid plus matching means.  Grid
    points with non-positive mean excess are excluded; fewer than three
    remaining points is an error.
    """
    if isinstance(report, RiskReport):
        grid, means = report.grid, report.mean_excess()
    else:
        grid, means = list(report), np.asarray(mean_excess, dtype=np.float64)
    used = [(n, e) for n, e in zip(grid, means) if e > 0]
    excluded = [n for n, e in zip(grid, means) if not e > 0]
    if len(used) < 3:
        raise ValueError(f"need >= 3 grid points with positive excess, have {len(used)} (excluded {excluded})")
    x = np.log([u[0] for u in used])
    y = np.log([u[1] for u in used])
    res = stats.linregress(x, y)
    return SlopeFit(float(res.slope), float(res.stderr), float(res.intercept), [u[0] for u in used], excluded)
