"""JSON model files and CSV datasets.

Model files carry a format version, the metric descriptor, the nuclei (or
training points for k-NN) and the integer class counts; floats are written
with ``repr`` precision so a reloaded model predicts bit-identically.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .metric import AugmentedSpace, Lifted, LpSpace, MetricSpace, TableSpace, parse_metric
from .models import (
    GammaNetModel,
    KNNModel,
    LabeledDataset,
    PartitionRegressor,
    ProtoKNNModel,
    ProtoNNModel,
)
from .partition import build_partition

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def space_to_json(space: MetricSpace) -> dict:
    if isinstance(space, AugmentedSpace):
        out = space_to_json(space.base)
        out["augment"] = {"delta": space.delta, "seed": space.seed}
        return out
    if isinstance(space, TableSpace) and space.source is None:
        return {"metric": "table", "symbols": space.symbols, "matrix": space.matrix.tolist()}
    return {"metric": space.descriptor()}


def space_from_json(obj: dict) -> MetricSpace:
    if obj["metric"] == "table" and "symbols" in obj:
        space = TableSpace(obj["symbols"], obj["matrix"])
    else:
        space = parse_metric(obj["metric"])
    if "augment" in obj:
        space = AugmentedSpace(space, obj["augment"]["delta"], obj["augment"]["seed"])
    return space


def points_to_json(points):
    if isinstance(points, Lifted):
        return {"base": points_to_json(points.base), "u": points.u.tolist()}
    if isinstance(points, np.ndarray):
        return points.tolist()
    return list(points)


def points_from_json(obj, space: MetricSpace):
    if isinstance(space, AugmentedSpace):
        return Lifted(points_from_json(obj["base"], space.base), np.asarray(obj["u"], dtype=np.float64))
    if isinstance(space, LpSpace):
        return np.asarray(obj, dtype=np.float64).reshape(len(obj), -1)
    return space.coerce(obj)


def model_to_json(model) -> dict:
    space = model.space
    out = {"format_version": FORMAT_VERSION, "space": space_to_json(space)}
    if isinstance(model, ProtoNNModel):
        out.update(kind="proto_nn", nuclei=points_to_json(model.partition.nuclei),
                   counts=model.counts.tolist(), n_cell=model.n_cell.tolist(),
                   n_classes=model.n_classes, posteriors=model.posteriors.tolist())
    elif isinstance(model, ProtoKNNModel):
        out.update(kind="proto_knn", nuclei=points_to_json(model.partition.nuclei),
                   counts=model.counts.tolist(), k=model.k,
                   n_classes=model.n_classes, posteriors=model.posteriors.tolist())
    elif isinstance(model, GammaNetModel):
        p = model.proto
        out.update(kind="optinet_lite", gamma=model.gamma, net_indices=model.net_indices.tolist(),
                   nuclei=points_to_json(p.partition.nuclei), counts=p.counts.tolist(),
                   n_cell=p.n_cell.tolist(), n_classes=p.n_classes, posteriors=p.posteriors.tolist(),
                   holdout_errors=[[g, e] for g, e in model.holdout_errors.items()])
    elif isinstance(model, KNNModel):
        out.update(kind="knn", k=model.k, n_classes=model.n_classes,
                   points=points_to_json(model.data.points), labels=model.data.labels.tolist())
    elif isinstance(model, PartitionRegressor):
        out.update(kind="regressor", nuclei=points_to_json(model.partition.nuclei),
                   means=model.means.tolist(), n_cell=model.n_cell.tolist(), n=model.n)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return out


def model_from_json(obj: dict):
    version = obj.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version!r}")
    try:
        space = space_from_json(obj["space"])
        kind = obj["kind"]
        if kind == "knn":
            data = LabeledDataset(points_from_json(obj["points"], space), np.asarray(obj["labels"]), obj["n_classes"])
            return KNNModel(space, data, obj["k"])
        partition = build_partition(space, points_from_json(obj["nuclei"], space))
        if kind == "regressor":
            return PartitionRegressor(partition, np.asarray(obj["means"], dtype=np.float64),
                                      np.asarray(obj["n_cell"], dtype=np.int64), obj["n"])
        counts = np.asarray(obj["counts"], dtype=np.int64).reshape(partition.m, obj["n_classes"])
        if kind == "proto_nn":
            return ProtoNNModel(partition, counts, np.asarray(obj["n_cell"], dtype=np.int64))
        if kind == "proto_knn":
            return ProtoKNNModel(partition, counts, obj["k"])
        if kind == "optinet_lite":
            proto = ProtoNNModel(partition, counts, np.asarray(obj["n_cell"], dtype=np.int64))
            errors = {float(g): float(e) for g, e in obj.get("holdout_errors", [])}
            return GammaNetModel(obj["gamma"], np.asarray(obj["net_indices"], dtype=np.intp), proto, errors)
    except KeyError as exc:
        raise ModelFormatError(f"model file lacks field {exc.args[0]!r}") from None
    raise ModelFormatError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model), indent=1))


def load_model(path):
    return model_from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# datasets


def read_dataset(path, space: MetricSpace, regression: bool = False, require_labels: bool = True):
    """Read ``x1..xd[,label]`` rows.

    Returns ``(points, labels)`` where labels is None when the file has no
    ``label`` column.  For vector metrics features are floats; otherwise the
    single column ``x1`` holds a symbol.
    """
    base = space.base if isinstance(space, AugmentedSpace) else space
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        header = [h.strip() for h in header]
        rows = [r for r in reader if r]
    has_label = bool(header) and header[-1] == "label"
    feat = header[:-1] if has_label else header
    if not feat or feat != [f"x{i + 1}" for i in range(len(feat))]:
        raise ValueError(f"{path}: header must be x1..xd followed by 'label'")
    if require_labels and not has_label:
        raise ValueError(f"{path}: missing 'label' column")
    if any(len(r) != len(header) for r in rows):
        raise ValueError(f"{path}: ragged rows")
    if isinstance(base, LpSpace):
        points = np.array([[float(v) for v in r[:len(feat)]] for r in rows], dtype=np.float64).reshape(len(rows), len(feat))
    else:
        if len(feat) != 1:
            raise ValueError(f"{path}: non-vector metrics take a single feature column x1")
        points = base.coerce([r[0] for r in rows])
    labels = None
    if has_label:
        raw = [r[-1] for r in rows]
        if regression:
            labels = np.array([float(v) for v in raw])
        else:
            labels = np.array([int(v) for v in raw], dtype=np.int64)
    return points, labels


def write_predictions(target, points, predictions) -> None:
    """Write features plus a ``prediction`` column to a path or an open text stream."""
    if hasattr(target, "write"):
        _write_predictions(target, points, predictions)
    else:
        with Path(target).open("w", newline="") as fh:
            _write_predictions(fh, points, predictions)


def _write_predictions(fh, points, predictions) -> None:
    w = csv.writer(fh, lineterminator="\n")
    if isinstance(points, np.ndarray):
        w.writerow([f"x{i + 1}" for i in range(points.shape[1])] + ["prediction"])
        for row, p in zip(points.tolist(), predictions):
            w.writerow([repr(v) for v in row] + [_fmt(p)])
    else:
        w.writerow(["x1", "prediction"])
        for row, p in zip(points, predictions):
            w.writerow([row, _fmt(p)])


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))
