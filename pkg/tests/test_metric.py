import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from metric_proto.metric import (
    AugmentedSpace,
    DiscreteSpace,
    EditSpace,
    Lifted,
    LpSpace,
    MetricAxiomError,
    TableSpace,
    UniverseError,
    augment,
    counter_uniforms,
    default_delta,
    levenshtein,
    parse_metric,
)
from metric_proto.checks import metric_axioms, metric_samplers

finite = st.floats(-1e6, 1e6, allow_nan=False)


class TestBasicDistances:
    def test_euclidean_345(self):
        assert LpSpace(2).distance([0, 0], [3, 4]) == 5.0

    def test_identity_every_metric(self):
        assert LpSpace(2).distance([1.5, -2], [1.5, -2]) == 0.0
        assert LpSpace(1).distance([7.0], [7.0]) == 0.0
        assert DiscreteSpace().distance("a", "a") == 0.0
        assert EditSpace().distance("kitten", "kitten") == 0.0

    def test_discrete_distinct_is_one(self):
        assert DiscreteSpace().distance("a", "b") == 1.0
        assert DiscreteSpace().distance(np.array([1.0, 2.0]), np.array([1.0, 3.0])) == 1.0

    def test_lp_norms(self):
        assert LpSpace(1).distance([0, 0], [3, 4]) == 7.0
        assert LpSpace(3).distance([0, 0], [3, 4]) == pytest.approx((27 + 64) ** (1 / 3))

    def test_lp_rejects_p_below_one(self):
        with pytest.raises(ValueError):
            LpSpace(0.5)

    def test_dimension_mismatch(self):
        with pytest.raises(UniverseError):
            LpSpace(2).distance([0, 0], [1, 2, 3])

    def test_edit_rejects_non_strings(self):
        with pytest.raises(UniverseError):
            EditSpace().distance("abc", 3)


class TestLevenshtein:
    @pytest.mark.parametrize("a,b,d", [
        ("", "", 0), ("", "abc", 3), ("kitten", "sitting", 3), ("flaw", "lawn", 2), ("abc", "cba", 2),
    ])
    def test_known_values(self, a, b, d):
        assert levenshtein(a, b) == d

    @given(st.text("abc", max_size=7), st.text("abc", max_size=7))
    def test_bounded_by_lengths(self, a, b):
        d = levenshtein(a, b)
        assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))
        assert d == levenshtein(b, a)

    @given(st.text("ab", max_size=6), st.text("ab", max_size=6))
    def test_matches_recursive_definition(self, a, b):
        from functools import lru_cache

        @lru_cache(maxsize=None)
        def lev(i, j):
            if i == 0 or j == 0:
                return i + j
            return min(lev(i - 1, j) + 1, lev(i, j - 1) + 1, lev(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

        assert levenshtein(a, b) == lev(len(a), len(b))


class TestVectorizedConsistency:
    """distance, to_many and pairwise must agree bit for bit; tie semantics depend on it."""

    @given(st.integers(1, 12).flatmap(
        lambda d: st.tuples(hnp.arrays(np.float64, (5, d), elements=finite),
                            hnp.arrays(np.float64, (4, d), elements=finite))),
        st.sampled_from([1.0, 2.0, 3.0, 1.5]))
    def test_lp_paths_agree(self, ab, p):
        A, B = ab
        sp = LpSpace(p)
        D = sp.pairwise(A, B)
        for i in range(len(A)):
            row = sp.to_many(A[i], B)
            assert np.array_equal(row, D[i])
            for j in range(len(B)):
                assert sp.distance(A[i], B[j]) == D[i, j]
                assert sp.distance(B[j], A[i]) == D[i, j]

    def test_augmented_paths_agree(self):
        rng = np.random.default_rng(3)
        sp = AugmentedSpace(LpSpace(2), 0.25, seed=11)
        A, B = sp.lift(rng.normal(size=(6, 2))), sp.lift(rng.normal(size=(5, 2)), offset=6)
        D = sp.pairwise(A, B)
        for i in range(6):
            assert np.array_equal(sp.to_many(A[i], B), D[i])
            for j in range(5):
                assert sp.distance(A[i], B[j]) == D[i, j]


class TestAugmented:
    def test_worked_arithmetic(self):
        base = LpSpace(2)
        sp = augment(base, 1.0, 0)
        assert sp.distance((np.array([0.0, 0.0]), 0.2), (np.array([3.0, 4.0]), 0.5)) == pytest.approx(5.3)
        assert sp.distance((np.array([1.0]), 0.4), (np.array([1.0]), 0.4)) == 0.0
        sp = augment(base, 0.1, 0)
        assert sp.distance((np.array([2.0]), 0.2), (np.array([2.0]), 0.7)) == pytest.approx(0.05)

    def test_delta_must_be_positive(self):
        with pytest.raises(ValueError):
            augment(LpSpace(2), 0.0, 1)

    def test_small_delta_converges_to_base(self):
        rng = np.random.default_rng(0)
        sp = augment(LpSpace(2), 1e-9, 5)
        A, B = sp.lift(rng.normal(size=(200, 3))), sp.lift(rng.normal(size=(200, 3)), offset=200)
        aug = sp.pairwise(A, B)
        base = LpSpace(2).pairwise(A.base, B.base)
        assert np.all(np.abs(aug - base) <= 1e-9)

    def test_no_ties_over_discrete(self):
        rng = np.random.default_rng(1)
        sp = augment(DiscreteSpace(), 0.01, 9)
        for t in range(1000):
            data = sp.lift(rng.integers(0, 2, size=(10, 1)).astype(float), offset=100 * t)
            q = sp.lift(rng.integers(0, 2, size=(1, 1)).astype(float), offset=100 * t + 50)[0]
            d = sp.to_many(q, data)
            assert len(np.unique(d)) == len(d)

    def test_lift_is_replayable(self):
        sp = augment(LpSpace(2), 0.1, 42)
        x = np.arange(6.0)[:, None]
        a, b = sp.lift(x), sp.lift(x)
        assert np.array_equal(a.u, b.u)
        # point i always gets the draw at offset + i
        assert np.array_equal(sp.lift(x[3:], offset=3).u, a.u[3:])

    def test_counter_uniforms_range_and_spread(self):
        u = counter_uniforms(7, 0, 100_000)
        assert u.min() >= 0 and u.max() < 1
        assert abs(u.mean() - 0.5) < 0.005
        assert not np.array_equal(counter_uniforms(7, 0, 10), counter_uniforms(8, 0, 10))

    def test_default_delta_scale(self):
        pts = np.linspace(0, 10, 101)[:, None]
        assert default_delta(LpSpace(2), pts) == pytest.approx(1e-6 * np.median(
            LpSpace(2).pairwise(pts[:100], pts[:100])[np.triu_indices(100, 1)]))

    def test_rejects_unlifted_points(self):
        sp = augment(LpSpace(2), 0.1, 0)
        with pytest.raises(UniverseError):
            sp.pairwise(np.zeros((2, 1)), np.zeros((2, 1)))

    def test_cannot_nest(self):
        with pytest.raises(ValueError):
            augment(augment(LpSpace(2), 0.1, 0), 0.1, 0)


class TestTable:
    def test_lookup_and_validation(self):
        sp = TableSpace(["a", "b", "c"], [[0, 1, 2], [1, 0, 1], [2, 1, 0]])
        assert sp.distance("a", "c") == 2.0
        with pytest.raises(UniverseError):
            sp.distance("a", "z")

    @pytest.mark.parametrize("matrix", [
        [[0, 1, 5], [1, 0, 1], [5, 1, 0]],   # triangle
        [[0, 1], [2, 0]],                     # asymmetric
        [[0, 0], [0, 0]],                     # pseudo-metric
        [[1, 1], [1, 0]],                     # self distance
        [[0, -1], [-1, 0]],                   # negative
    ])
    def test_rejects_non_metrics(self, matrix):
        with pytest.raises(MetricAxiomError):
            TableSpace([f"s{i}" for i in range(len(matrix))], matrix)

    def test_from_csv(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text(",x,y\nx,0,2.5\ny,2.5,0\n")
        sp = parse_metric(f"table:{p}")
        assert sp.distance("x", "y") == 2.5
        assert sp.descriptor() == f"table:{p}"

    def test_from_csv_rejects_violation(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text(",a,b,c\na,0,1,9\nb,1,0,1\nc,9,1,0\n")
        with pytest.raises(MetricAxiomError):
            parse_metric(f"table:{p}")


class TestParse:
    @pytest.mark.parametrize("cfg,cls", [
        ("euclidean", LpSpace), ("lp:1", LpSpace), ("lp:2.5", LpSpace), ("discrete", DiscreteSpace), ("edit", EditSpace),
    ])
    def test_known(self, cfg, cls):
        assert isinstance(parse_metric(cfg), cls)

    def test_descriptor_roundtrip(self):
        for cfg in ("euclidean", "lp:1", "lp:3", "discrete", "edit"):
            assert parse_metric(parse_metric(cfg).descriptor()).descriptor() == parse_metric(cfg).descriptor()

    @pytest.mark.parametrize("cfg", ["cosine", "lp:x", "lp:0.5", "table:", "euclidean:3"])
    def test_unknown(self, cfg):
        with pytest.raises(ValueError):
            parse_metric(cfg)


class TestAxioms:
    @pytest.mark.parametrize("name", list(metric_samplers(np.random.default_rng(0))))
    def test_random_triples(self, name):
        space, gen = metric_samplers(np.random.default_rng(123))[name]
        ok, detail = metric_axioms(space, gen(2000), gen(2000), gen(2000))
        assert ok, detail

    @given(hnp.arrays(np.float64, (3, 4), elements=finite), st.sampled_from([1.0, 2.0, 4.0]))
    def test_lp_triangle(self, pts, p):
        sp = LpSpace(p)
        a, b, c = pts
        dab, dbc, dac = sp.distance(a, b), sp.distance(b, c), sp.distance(a, c)
        assert dac <= dab + dbc + 1e-12 * max(1.0, dab, dbc, dac)
        assert sp.distance(a, b) == sp.distance(b, a)

    def test_metric_axioms_detects_bad_metric(self):
        class Bad(LpSpace):
            def distance(self, a, b):
                return float(np.sum(np.asarray(a) - np.asarray(b)))
        rng = np.random.default_rng(0)
        ok, _ = metric_axioms(Bad(2), rng.normal(size=(20, 2)), rng.normal(size=(20, 2)), rng.normal(size=(20, 2)))
        assert not ok


def test_lifted_indexing():
    pts = Lifted(np.array([[1.0], [2.0]]), np.array([0.1, 0.2]))
    base, u = pts[1]
    assert base[0] == 2.0 and u == 0.2 and len(pts) == 2
    assert math.isclose(AugmentedSpace(LpSpace(2), 1.0).distance(pts[0], pts[1]), 1.1)
