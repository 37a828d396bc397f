import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from metric_proto.synthetic import (
    FAMILIES,
    PowerH,
    bayes_predictor,
    bayes_risk,
    check_generalized_lipschitz,
    check_margin,
    integrate_bayes_risk,
    list_families,
    parse_family,
    posterior_gap,
    sample,
    wilson_upper,
)

ALL = ["purenoise:M=3", "purenoise:M=2,d=2", "noiseless:d=2", "noiseless:d=5", "margin:beta=1.0",
       "margin:beta=0.5", "margin:beta=2", "linear", "simplex:d=2,M=3", "simplex:d=1,M=4"]


class TestRegistry:
    def test_parse(self):
        spec = parse_family("simplex:d=2,M=4")
        assert spec.dim == 2 and spec.n_classes == 4

    @pytest.mark.parametrize("bad", ["gauss", "margin:gamma=1", "margin:beta", "margin:beta=-1", "simplex:d=x"])
    def test_bad_configs(self, bad):
        with pytest.raises(ValueError):
            parse_family(bad)

    def test_list(self):
        names = [n for n, _ in list_families()]
        assert len(names) == len(FAMILIES)
        assert any(n.startswith("margin") for n in names)


class TestSampling:
    @pytest.mark.parametrize("fam", ALL)
    def test_posterior_normalized(self, fam):
        spec = parse_family(fam)
        P = spec.posterior(spec.sample_x(10_000, np.random.default_rng(0)))
        assert np.all(np.abs(P.sum(axis=1) - 1) <= 1e-12)
        assert P.min() >= 0

    def test_purenoise_frequencies(self):
        data = sample(parse_family("purenoise:M=3"), 100_000, 0)
        freq = np.bincount(data.labels - 1, minlength=3) / data.n
        assert np.all(np.abs(freq - 1 / 3) <= 0.01)

    def test_noiseless_labels_deterministic(self):
        spec = parse_family("noiseless:d=2")
        data = sample(spec, 5000, 1)
        assert np.array_equal(data.labels, spec.bayes_classifier(data.points))

    def test_same_seed_same_data(self):
        spec = parse_family("simplex:d=2,M=3")
        a, b = sample(spec, 500, 9), sample(spec, 500, 9)
        assert np.array_equal(a.points, b.points) and np.array_equal(a.labels, b.labels)
        c = sample(spec, 500, 10)
        assert not np.array_equal(a.points, c.points)

    @pytest.mark.parametrize("fam", ["linear", "margin:beta=0.5", "simplex:d=1,M=3"])
    def test_sampler_agrees_with_posterior(self, fam):
        spec = parse_family(fam)
        data = sample(spec, 100_000, 3)
        x = data.points[:, 0]
        bins = np.minimum((x * 10).astype(int), 9)
        P = spec.posterior(data.points)
        for b in range(10):
            sel = bins == b
            for j in range(spec.n_classes):
                emp = np.mean(data.labels[sel] == j + 1)
                expected = P[sel, j].mean()
                se = math.sqrt(max(expected * (1 - expected), 1e-12) / sel.sum())
                assert abs(emp - expected) <= 3 * se + 1e-9, (b, j)

    def test_n_positive(self):
        with pytest.raises(ValueError):
            sample(parse_family("linear"), 0, 0)


class TestBayesRisk:
    def test_purenoise_exact(self):
        assert bayes_risk(parse_family("purenoise:M=3")) == 2 / 3

    def test_linear(self):
        assert abs(bayes_risk(parse_family("linear")) - 0.25) <= 1e-6
        val, err, method = integrate_bayes_risk(parse_family("linear"))
        assert method == "quad" and abs(val - 0.25) <= 1e-6

    def test_noiseless_zero(self):
        assert bayes_risk(parse_family("noiseless:d=2")) == 0.0

    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
    def test_margin_closed_form_matches_quadrature(self, beta):
        spec = parse_family(f"margin:beta={beta}")
        val, _, _ = integrate_bayes_risk(spec)
        assert abs(val - bayes_risk(spec)) <= 1e-6

    def test_simplex_by_quadrature(self):
        spec = parse_family("simplex:d=1,M=3")
        val, err, method = integrate_bayes_risk(spec)
        assert method == "quad"
        mc = 1 - spec.posterior(spec.sample_x(200_000, np.random.default_rng(0))).max(axis=1)
        assert abs(val - mc.mean()) <= 4 * mc.std() / math.sqrt(len(mc))

    def test_high_dimension_uses_qmc(self):
        spec = parse_family("noiseless:d=5")
        val, err, method = integrate_bayes_risk(spec, qmc_points=2**14)
        assert method == "rqmc" and val == 0.0

    def test_bayes_predictor(self):
        spec = parse_family("linear")
        g = bayes_predictor(spec)
        assert g.predict(np.array([[0.2], [0.8]])).tolist() == [2, 1]


class TestMargin:
    T = [0.01, 0.1, 0.25, 0.5, 0.75, 1.0]

    def test_margin_family_cdf(self):
        rows = check_margin(parse_family("margin:beta=1.0"), self.T, 100_000, 0)
        half = next(r for r in rows if r.t == 0.5)
        assert abs(half.empirical - 0.5) <= 3 * half.stderr
        assert not any(r.violated for r in rows)

    @pytest.mark.parametrize("beta", [0.5, 2.0])
    def test_declared_constants_hold(self, beta):
        rows = check_margin(parse_family(f"margin:beta={beta}"), self.T, 100_000, 1)
        assert not any(r.violated for r in rows)

    def test_purenoise_flagged(self):
        spec = parse_family("purenoise:M=3")
        with pytest.raises(ValueError):
            check_margin(spec, self.T, 1000, 0)
        rows = check_margin(spec, self.T, 1000, 0, alpha=1.0, c_star=1.0)
        assert all(r.empirical == 1.0 for r in rows)
        assert any(r.violated for r in rows)

    def test_noiseless_gap_one(self):
        spec = parse_family("noiseless:d=2")
        assert np.all(posterior_gap(spec, spec.sample_x(1000, np.random.default_rng(0))) == 1.0)
        rows = check_margin(spec, self.T, 10_000, 0, alpha=5.0, c_star=1.0)
        assert not any(r.violated for r in rows)

    def test_overstated_alpha_flagged(self):
        rows = check_margin(parse_family("margin:beta=1.0"), self.T, 100_000, 0, alpha=3.0, c_star=1.0)
        assert any(r.violated for r in rows)

    def test_t_range(self):
        with pytest.raises(ValueError):
            check_margin(parse_family("linear"), [0.0], 10, 0)


class TestLipschitz:
    def test_linear_holds(self):
        rep = check_generalized_lipschitz(parse_family("linear"), 1000, 10_000, 0)
        assert rep.n_violations == 0

    def test_purenoise_any_h(self):
        rep = check_generalized_lipschitz(parse_family("purenoise:M=3"), 500, 2000, 0, h=PowerH(1e-6, 5.0))
        assert rep.n_violations == 0 and np.all(rep.lhs == 0)

    def test_noiseless_boundary_pairs_flagged(self):
        spec = parse_family("noiseless:d=2")
        xs = np.array([[0.499, 0.3], [0.4999, 0.7]])
        zs = np.array([[0.501, 0.3], [0.5001, 0.7]])
        rep = check_generalized_lipschitz(spec, 0, 20_000, 0, h=PowerH(1.0, 1.0), pairs=(xs, zs))
        assert rep.n_violations == 2

    def test_margin_declared_h_holds(self):
        for beta in (0.5, 1.0, 2.0):
            rep = check_generalized_lipschitz(parse_family(f"margin:beta={beta}"), 500, 10_000, 1)
            assert rep.n_violations == 0, beta

    def test_wrong_h_flagged(self):
        rep = check_generalized_lipschitz(parse_family("linear"), 1000, 10_000, 0, h=PowerH(0.1, 1.0))
        assert rep.n_violations > 0

    def test_requires_h(self):
        with pytest.raises(ValueError):
            check_generalized_lipschitz(parse_family("noiseless:d=2"), 10, 100, 0)

    @given(st.floats(0, 1), st.integers(1, 10_000))
    def test_wilson_upper_bounds_estimate(self, p, n):
        u = float(wilson_upper(np.array([p]), n)[0])
        assert p - 1e-12 <= u <= 1.0
        assert wilson_upper(np.array([0.0]), n)[0] > 0


class TestTheory:
    def test_margin_exponents(self):
        spec = parse_family("margin:beta=1.0")
        assert spec.theoretical_exponent() == pytest.approx(-2 / 3)
        assert spec.knn_exponent() == pytest.approx(2 / 3)

    def test_concavity_diagnostic(self):
        assert PowerH(1.0, 0.5).concave_on_grid()
        assert PowerH(2.0, 1.0).concave_on_grid()
        assert not PowerH(1.0, 2.0).concave_on_grid()
