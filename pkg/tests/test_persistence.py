import json

import numpy as np
import pytest

from metric_proto.metric import AugmentedSpace, DiscreteSpace, EditSpace, LpSpace, TableSpace
from metric_proto.models import (
    LabeledDataset,
    fit_knn,
    fit_optinet_lite,
    fit_partition_regressor,
    fit_proto_knn,
    fit_proto_nn,
)
from metric_proto.persistence import (
    FORMAT_VERSION,
    ModelFormatError,
    load_model,
    model_from_json,
    model_to_json,
    read_dataset,
    save_model,
    write_predictions,
)

rng = np.random.default_rng(0)
PTS = rng.random((80, 2)) * 10.0 ** rng.integers(-3, 3, size=(80, 1))
Y = rng.integers(1, 4, 80)
NUC = rng.random((7, 2))
PROBES = rng.random((500, 2)) * 10.0 ** rng.integers(-3, 3, size=(500, 1))


def models():
    data = LabeledDataset(PTS, Y, 3)
    E = LpSpace(2)
    yield "proto_nn", fit_proto_nn(data, NUC, E)
    yield "proto_knn", fit_proto_knn(data, NUC, 5, LpSpace(1))
    yield "knn", fit_knn(data, 7, LpSpace(3))
    yield "optinet", fit_optinet_lite(data.subset(range(60)), data.subset(range(60, 80)), None, E)


@pytest.mark.parametrize("name,model", list(models()))
def test_roundtrip_bit_identical(tmp_path, name, model):
    path = tmp_path / f"{name}.json"
    save_model(model, path)
    loaded = load_model(path)
    assert np.array_equal(loaded.predict(PROBES), model.predict(PROBES))
    assert np.array_equal(loaded.posterior(PROBES), model.posterior(PROBES))
    assert json.loads(path.read_text())["format_version"] == FORMAT_VERSION


def test_regressor_roundtrip(tmp_path):
    y = rng.normal(size=80) / 3.0
    model = fit_partition_regressor(LabeledDataset(PTS, y), NUC, LpSpace(2))
    save_model(model, tmp_path / "r.json")
    loaded = load_model(tmp_path / "r.json")
    for trunc in (False, True):
        assert np.array_equal(loaded.predict(PROBES, truncated=trunc), model.predict(PROBES, truncated=trunc))


def test_augmented_roundtrip(tmp_path):
    sp = AugmentedSpace(DiscreteSpace(), 0.01, seed=99)
    pts = sp.lift(rng.integers(0, 2, size=(40, 1)).astype(float))
    data = LabeledDataset(pts, rng.integers(1, 3, 40), 2)
    model = fit_proto_knn(data, sp.lift(rng.integers(0, 2, size=(5, 1)).astype(float), offset=40), 3, sp)
    save_model(model, tmp_path / "a.json")
    loaded = load_model(tmp_path / "a.json")
    probes = sp.lift(rng.integers(0, 2, size=(50, 1)).astype(float), offset=100)
    assert isinstance(loaded.space, AugmentedSpace) and loaded.space.seed == 99
    assert np.array_equal(loaded.predict(probes), model.predict(probes))


def test_table_and_edit_spaces(tmp_path):
    table = TableSpace(["a", "b", "c"], [[0, 1, 2], [1, 0, 1], [2, 1, 0]])
    m = fit_proto_nn(LabeledDataset(["a", "c", "c"], [1, 2, 2], 2), ["a", "c"], table)
    save_model(m, tmp_path / "t.json")
    assert load_model(tmp_path / "t.json").predict(["a", "b", "c"]).tolist() == m.predict(["a", "b", "c"]).tolist()
    e = fit_knn(LabeledDataset(["aa", "bb"], [1, 2], 2), 1, EditSpace())
    save_model(e, tmp_path / "e.json")
    assert load_model(tmp_path / "e.json").predict(["ab", "bb"]).tolist() == [1, 2]


def test_bad_files():
    with pytest.raises(ModelFormatError):
        model_from_json({"format_version": 99})
    good = model_to_json(next(models())[1])
    broken = dict(good)
    del broken["counts"]
    with pytest.raises(ModelFormatError):
        model_from_json(broken)
    with pytest.raises(ModelFormatError):
        model_from_json(dict(good, kind="forest"))


class TestDatasets:
    def test_read_write(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("x1,x2,label\n0.5,1.0,2\n-1,3e2,1\n")
        X, y = read_dataset(p, LpSpace(2))
        assert X.tolist() == [[0.5, 1.0], [-1.0, 300.0]] and y.tolist() == [2, 1]
        out = tmp_path / "o.csv"
        write_predictions(out, X, np.array([2, 1]))
        assert out.read_text().splitlines() == ["x1,x2,prediction", "0.5,1.0,2", "-1.0,300.0,1"]

    def test_unlabeled(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("x1\n1\n2\n")
        X, y = read_dataset(p, LpSpace(2), require_labels=False)
        assert y is None and X.shape == (2, 1)
        with pytest.raises(ValueError):
            read_dataset(p, LpSpace(2))

    def test_symbolic(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("x1,label\nabc,1\nxyz,2\n")
        X, y = read_dataset(p, EditSpace())
        assert X == ["abc", "xyz"]

    def test_regression_labels(self, tmp_path):
        p = tmp_path / "r.csv"
        p.write_text("x1,label\n1,0.25\n")
        assert read_dataset(p, LpSpace(2), regression=True)[1].tolist() == [0.25]

    @pytest.mark.parametrize("text", ["", "a,b,label\n1,2,1\n", "x1,label\n1\n", "x2,label\n1,1\n", "x1,label\n1,abc\n"])
    def test_malformed(self, tmp_path, text):
        p = tmp_path / "bad.csv"
        p.write_text(text)
        with pytest.raises(ValueError):
            read_dataset(p, LpSpace(2))
