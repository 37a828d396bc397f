"""Command-line entry point: ``metric-proto <subcommand> ...``.

Exit status is 0 on success, 1 on a validation failure (bad arguments,
malformed config or data, failed checks) and 2 on an I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import checks
from .harness import ConfigError, ExperimentConfig, rate_sweep
from .metric import AugmentedSpace, MetricAxiomError, augment, default_delta, parse_metric
from .models import (
    LabeledDataset,
    PartitionRegressor,
    fit_knn,
    fit_optinet_lite,
    fit_partition_regressor,
    fit_proto_knn,
    fit_proto_nn,
    knn_k,
    proto_nn_m,
)
from .persistence import ModelFormatError, load_model, read_dataset, save_model, write_predictions
from .synthetic import list_families, parse_family, sample

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2

# queries are lifted from this counter offset so they never share tie-breaking
# draws with training points or nuclei
QUERY_OFFSET = 1 << 40


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def cmd_fit(args) -> int:
    space = parse_metric(args.metric)
    regression = args.classifier == "regressor"
    points, labels = read_dataset(args.data, space, regression=regression)
    n_classes = None if regression else int(labels.max(initial=0))
    if args.n_classes is not None:
        n_classes = args.n_classes
    if args.nuclei is not None:
        nuclei, _ = read_dataset(args.nuclei, space, require_labels=False)
    else:
        nuclei = None

    if args.delta is not None:
        delta = default_delta(space, points) if args.delta == "auto" else float(args.delta)
        space = augment(space, delta, args.seed)
        n_total = len(labels)
        points = space.lift(points)
        if nuclei is not None:
            nuclei = space.lift(nuclei, offset=n_total)

    data = LabeledDataset(points, labels, n_classes)
    if nuclei is None and args.classifier in ("proto_nn", "proto_knn", "regressor"):
        # split off m rows as the unlabeled nucleus sample; their labels are discarded
        m = args.m if args.m is not None else proto_nn_m(data.n)
        if not 1 <= m < data.n:
            raise ValueError(f"cannot split {m} nuclei off {data.n} rows")
        perm = np.random.default_rng(args.seed).permutation(data.n)
        nuclei = data.subset(perm[:m]).points
        data = data.subset(np.sort(perm[m:]))

    k = args.k if args.k is not None else knn_k(data.n)
    c = args.classifier
    if c == "proto_nn":
        model = fit_proto_nn(data, nuclei, space)
    elif c == "proto_knn":
        model = fit_proto_knn(data, nuclei, k, space)
    elif c == "knn":
        model = fit_knn(data, k, space)
    elif c == "regressor":
        model = fit_partition_regressor(data, nuclei, space)
    else:
        n_hold = min(data.n - 1, max(1, round(args.holdout_fraction * data.n)))
        perm = np.random.default_rng(args.seed).permutation(data.n)
        train, hold = data.subset(np.sort(perm[n_hold:])), data.subset(np.sort(perm[:n_hold]))
        model = fit_optinet_lite(train, hold, None, space)
    save_model(model, args.out)
    print(f"wrote {c} model to {args.out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    space = model.space
    points, _ = read_dataset(args.data, space, require_labels=False)
    query = space.lift(points, offset=QUERY_OFFSET) if isinstance(space, AugmentedSpace) else points
    if isinstance(model, PartitionRegressor):
        pred = model.predict(query, truncated=args.truncated)
    else:
        pred = model.predict(query)
    write_predictions(args.out if args.out is not None else sys.stdout, points, pred)
    return EXIT_OK


def cmd_rates(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    report = rate_sweep(cfg, workers=args.workers)
    report.to_csv(args.out)
    summary = report.summary()
    summary_path = args.summary or str(Path(args.out).with_suffix(".summary.json"))
    Path(summary_path).write_text(json.dumps(summary, indent=1))
    slope = summary["slope"]
    shown = "n/a" if slope is None else f"{slope:.4f} +/- {summary['slope_stderr']:.4f}"
    print(f"wrote {len(report.rows)} rows to {args.out}; slope {shown}, "
          f"theory {summary['theoretical_exponent']}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = checks.run_battery(full=args.full, seed=args.seed)
    for r in results:
        print(r.line())
    passed, failed = checks.summarize(results)
    print(f"{passed} passed, {failed} failed")
    return EXIT_OK if failed == 0 else EXIT_INVALID


def cmd_list_families(args) -> int:
    for name, desc in list_families():
        print(f"{name:24s} {desc}")
    return EXIT_OK


def cmd_sample(args) -> int:
    spec = parse_family(args.family)
    data = sample(spec, args.n, args.seed)
    X = data.points
    with open(args.out, "w") as fh:
        fh.write(",".join([f"x{i + 1}" for i in range(X.shape[1])] + ["label"]) + "\n")
        for row, y in zip(X.tolist(), data.labels.tolist()):
            fh.write(",".join(repr(v) for v in row) + f",{y}\n")
    print(f"wrote {args.n} points from {spec.name} to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="metric-proto", description="Prototype and nearest-neighbor rules in metric spaces.")
    sub = p.add_subparsers(dest="command", metavar="{fit,predict,rates,verify,list-families,sample}",
                           parser_class=_Parser)

    f = sub.add_parser("fit", help="train a model from a labeled CSV and save it as JSON")
    f.add_argument("--data", required=True)
    f.add_argument("--classifier", required=True,
                   choices=["proto_nn", "proto_knn", "knn", "optinet_lite", "regressor"])
    f.add_argument("--out", required=True)
    f.add_argument("--metric", default="euclidean")
    f.add_argument("--nuclei", help="CSV of nucleus points (x1..xd); default splits m rows off --data")
    f.add_argument("--m", type=int)
    f.add_argument("--k", type=int)
    f.add_argument("--n-classes", type=int)
    f.add_argument("--delta", help="tie-breaking augmentation scale, a number or 'auto'")
    f.add_argument("--holdout-fraction", type=float, default=0.2)
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="classify CSV rows with a saved model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out")
    pr.add_argument("--truncated", action="store_true", help="regressor: zero out sparse cells")
    pr.set_defaults(func=cmd_predict)

    r = sub.add_parser("rates", help="run a convergence sweep from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--summary")
    r.add_argument("--workers", type=int)
    r.set_defaults(func=cmd_rates)

    v = sub.add_parser("verify", help="run the property and oracle battery")
    v.add_argument("--full", action="store_true", help="use the full instance counts")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    lf = sub.add_parser("list-families", help="list the built-in synthetic distributions")
    lf.set_defaults(func=cmd_list_families)

    s = sub.add_parser("sample", help="write a labeled sample from a synthetic family")
    s.add_argument("--family", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_sample)
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_INVALID
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ModelFormatError, MetricAxiomError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run_cli())


__all__ = ["run_cli", "main", "build_parser"]
