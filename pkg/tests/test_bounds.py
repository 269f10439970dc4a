import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import central_difference, permutation_range, two_point_coupling_range
from otbounds.bounds import (
    PARAMETERS,
    ParameterSpec,
    aggregate_theta,
    cdf_bound_curve,
    estimate,
    gamma_bounds,
    grad_envelope,
    parameter,
    quantile_identified_set,
    theta_bounds_cell,
)
from otbounds.costs import IndicatorCost, smooth_cost
from otbounds.data import Sample
from otbounds.dual import makarov_closed_form
from otbounds.errors import ConfigurationError, EvaluationError
from otbounds.measures import SignedMeasure

from conftest import random_proper

HALF = SignedMeasure([0.0, 1.0], [0.5, 0.5])
SMOOTH = ["product", "squared_diff", "abs_diff", "effect_times_control"]


def iv_sample(rng, n=300, cells=("a", "b", "c"), exogenous=False):
    x = rng.choice(list(cells), n)
    z = rng.integers(0, 2, n)
    kind = rng.choice(3, n, p=[0.6, 0.2, 0.2])  # complier, always, never
    d = np.where(kind == 0, z, np.where(kind == 1, 1, 0))
    if exogenous:
        d = z
    shift = np.array([cells.index(v) for v in x]) * 0.5
    y = np.round(rng.normal(size=n) + shift + d * 0.7 + (kind == 1) * 0.4, 1)
    return Sample.from_arrays(y, d, None if exogenous else z, x)


def _tiny_params():
    """A strictly convex g with an interior minimum, for the non-monotone path."""
    return ParameterSpec(
        "square", smooth_cost("product"), lambda t, e: t * t, lambda t, e: np.array([2 * t])
    )


class TestThetaCell:
    @pytest.mark.parametrize("name", SMOOTH + ["zero"])
    def test_point_mass_collapse(self, rng, name):
        for _ in range(5):
            mu1 = random_proper(rng, 10)
            cb = theta_bounds_cell(mu1, SignedMeasure([float(rng.uniform(0, 10))], [1.0]), smooth_cost(name))
            assert cb.lower == pytest.approx(cb.upper, abs=1e-7)

    def test_identical_two_point_squared(self):
        cb = theta_bounds_cell(HALF, HALF, smooth_cost("squared_diff"))
        lo, hi = two_point_coupling_range(0.5, 0.5, np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert (cb.lower, cb.upper) == pytest.approx((lo, hi), abs=1e-9)
        assert (cb.lower, cb.upper) == pytest.approx((0.0, 1.0), abs=1e-9)

    def test_prop_benefit_identical(self):
        cb = theta_bounds_cell(HALF, HALF, parameter("prop_benefit").cost)
        assert (cb.lower, cb.upper) == (0.0, 1.0)
        assert cb.method == "closed_form"

    def test_signed_indicator_uses_sweep(self):
        m = SignedMeasure([0.0, 1.0, 2.0], [0.75, 0.5, -0.25])
        cb = theta_bounds_cell(m, HALF, IndicatorCost(0.0))
        assert cb.method == "sweep"

    @pytest.mark.parametrize("name", SMOOTH)
    def test_monotone_matches_lp(self, rng, name):
        cost = smooth_cost(name)
        for _ in range(10):
            mu1, mu0 = random_proper(rng, 15), random_proper(rng, 15)
            lp = theta_bounds_cell(mu1, mu0, cost, "lp")
            mono = theta_bounds_cell(mu1, mu0, cost, "monotone")
            assert mono.lower == pytest.approx(lp.lower, abs=1e-6)
            assert mono.upper == pytest.approx(lp.upper, abs=1e-6)

    def test_permutation_oracle(self, rng):
        for _ in range(10):
            y1 = np.sort(rng.choice(40, 5, replace=False) / 4)
            y0 = np.sort(rng.choice(40, 5, replace=False) / 4)
            m1, m0 = SignedMeasure(y1, np.full(5, 0.2)), SignedMeasure(y0, np.full(5, 0.2))
            cost = smooth_cost("effect_times_control")
            cb = theta_bounds_cell(m1, m0, cost)
            assert (cb.lower, cb.upper) == pytest.approx(permutation_range(y1, y0, cost), abs=1e-7)

    def test_monotone_rejects_signed(self):
        m = SignedMeasure([0.0, 1.0, 2.0], [0.75, 0.5, -0.25])
        with pytest.raises(ConfigurationError):
            theta_bounds_cell(m, HALF, smooth_cost("product"), "monotone")
        assert theta_bounds_cell(m, HALF, smooth_cost("product"), "auto").method == "lp"


class TestAggregate:
    def test_weighted_mean(self):
        assert aggregate_theta([0.5, 0.5], [[0, 0], [2, 2]])[0] == 1.0

    def test_all_cells_is_identity(self):
        per = [[0.1, 0.4], [0.3, 0.9]]
        assert aggregate_theta([0.25, 0.75], per, ["a", "b"], ["a", "b"]) == aggregate_theta([0.25, 0.75], per)

    def test_single_cell_renormalises(self):
        per = [[0.1, 0.4], [0.3, 0.9]]
        assert aggregate_theta([0.25, 0.75], per, ["a"], ["a", "b"]) == (0.1, 0.4)

    def test_bad_subsets(self):
        with pytest.raises(ConfigurationError):
            aggregate_theta([0.5, 0.5], [[0, 1], [0, 1]], [], ["a", "b"])
        with pytest.raises(ConfigurationError):
            aggregate_theta([0.5, 0.5], [[0, 1], [0, 1]], ["z"], ["a", "b"])


class TestGamma:
    def test_identity(self):
        assert gamma_bounds(0.2, 0.7, [], parameter("identity"))[:2] == (0.2, 0.7)

    def test_variance(self):
        gl, gh, *_ = gamma_bounds(1.0, 2.0, [1.0, 0.0], parameter("variance_te"))
        assert (gl, gh) == (0.0, 1.0)

    def test_square_interior(self):
        gl, gh, tl, th = gamma_bounds(-1.0, 2.0, [], _tiny_params())
        assert gl == pytest.approx(0.0, abs=1e-18)
        assert abs(tl) <= 1e-9
        assert (gh, th) == (4.0, 2.0)

    def test_non_finite(self):
        with pytest.raises(EvaluationError, match="theta"):
            gamma_bounds(0.0, 1.0, [0.0, 1.0, 0.0], parameter("ols_slope"))

    def test_prop_benefit_flips(self):
        gl, gh, tl, th = gamma_bounds(0.2, 0.7, [], parameter("prop_benefit"))
        assert (gl, gh) == pytest.approx((0.3, 0.8))
        assert (tl, th) == (0.7, 0.2)

    @given(st.floats(-5, 5), st.floats(0, 5), st.floats(0, 1), st.floats(-2, 2), st.floats(-2, 2))
    @settings(max_examples=100, deadline=None)
    def test_containment(self, lo, width, u, e0, e1):
        p = parameter("cov_te_y0")
        eta = np.array([e0, e1])
        gl, gh, *_ = gamma_bounds(lo, lo + width, eta, p)
        v = p.g(lo + u * width, eta)
        assert gl - 1e-9 <= v <= gh + 1e-9

    @given(st.floats(-3, 0), st.floats(0, 3), st.floats(0, 1))
    @settings(max_examples=60, deadline=None)
    def test_containment_nonmonotone(self, lo, hi, u):
        p = _tiny_params()
        gl, gh, *_ = gamma_bounds(lo, hi, [], p)
        v = p.g(lo + u * (hi - lo), [])
        assert gl - 1e-12 <= v <= gh + 1e-12


def _random_eta(rng, p):
    # moments with positive variances for correlation and slope
    if p.name == "correlation":
        m1, m0 = rng.normal(size=2)
        return np.array([m1, m1 * m1 + rng.uniform(0.5, 2), m0, m0 * m0 + rng.uniform(0.5, 2)])
    if p.name == "ols_slope":
        m0 = rng.normal()
        return np.array([rng.normal(), m0, m0 * m0 + rng.uniform(0.5, 2)])
    return rng.normal(size=p.k)


class TestGradient:
    def test_identity_endpoints(self):
        p = parameter("identity")
        gl, gh, tl, th = gamma_bounds(0.2, 0.7, [], p)
        a, b = grad_envelope(0.2, 0.7, [], p, tl, th)
        assert list(a) == [1.0, 0.0] and list(b) == [0.0, 1.0]

    def test_interior_optimum(self):
        p = ParameterSpec(
            "shifted", smooth_cost("product"), lambda t, e: (t - e[0]) ** 2 + e[0],
            lambda t, e: np.array([2 * (t - e[0]), -2 * (t - e[0]) + 1]), eta1=(lambda y: y,),
        )
        gl, gh, tl, th = gamma_bounds(-1.0, 2.0, [0.5], p)
        a, _ = grad_envelope(-1.0, 2.0, [0.5], p, tl, th)
        assert a[:2] == pytest.approx([0.0, 0.0], abs=1e-6)
        assert a[2] == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("name", sorted(set(PARAMETERS) - {"cdf"}) + ["cdf"])
    def test_finite_differences(self, name):
        p = parameter(name)
        rng = np.random.default_rng(len(name))
        for _ in range(10):
            lo = rng.uniform(-1, 1)
            hi = lo + rng.uniform(0.2, 1)
            if name == "correlation":
                eta = _random_eta(rng, p)
                sd = math.sqrt((eta[1] - eta[0] ** 2) * (eta[3] - eta[2] ** 2))
                lo, hi = eta[0] * eta[2] + sd * np.sort(rng.uniform(-0.9, 0.9, 2))
            else:
                eta = _random_eta(rng, p)
            x = np.concatenate([[lo, hi], eta])
            gl, gh, tl, th = gamma_bounds(lo, hi, eta, p)
            a, b = grad_envelope(lo, hi, eta, p, tl, th)
            fl = central_difference(lambda v: gamma_bounds(v[0], v[1], v[2:], p)[0], x)
            fh = central_difference(lambda v: gamma_bounds(v[0], v[1], v[2:], p)[1], x)
            assert np.allclose(a, fl, rtol=1e-4, atol=1e-6)
            assert np.allclose(b, fh, rtol=1e-4, atol=1e-6)


class TestEstimate:
    def test_pooling_contains_aggregate(self):
        for seed in range(5):
            s = iv_sample(np.random.default_rng(seed))
            for name in ("identity", "variance_te", "cdf"):
                res = estimate(s, parameter(name))
                agg = res.theta
                assert res.pooled_theta[0] <= agg[0] + 1e-7
                assert res.pooled_theta[1] >= agg[1] - 1e-7

    def test_subset_uses_renormalised_shares(self):
        s = iv_sample(np.random.default_rng(3))
        full = estimate(s, parameter("identity"), pooled=False)
        sub = estimate(s, parameter("identity"), subset=["b"], pooled=False)
        k = s.cells.index("b")
        assert sub.theta == pytest.approx(tuple(full.theta_cells[k]))
        assert sub.subset == ("b",)

    def test_auto_solver_matches_lp(self):
        s = iv_sample(np.random.default_rng(4), exogenous=True)
        a = estimate(s, parameter("correlation"), solver="lp")
        b = estimate(s, parameter("correlation"), solver="auto")
        assert b.gamma == pytest.approx(a.gamma, abs=1e-6)
        assert set(b.methods) == {"monotone"}

    def test_unclipped_warning_for_signed_cdf(self):
        # complier weights for Y1 are {0: 1.5, 1: -0.5}; Y0 is a point mass at 5
        y = [0, 0, 0, 5, 1, 5, 5, 5]
        d = [1, 1, 1, 0, 1, 0, 0, 0]
        z = [1, 1, 1, 1, 0, 0, 0, 0]
        s = Sample.from_arrays(np.array(y, float), d, z)
        res = estimate(s, parameter("cdf", delta=-4.5))
        assert res.theta[0] == pytest.approx(1.5)
        assert any("unclipped" in w for w in res.warnings)


class TestCdfCurve:
    def test_tails(self, rng):
        s = iv_sample(rng, exogenous=True)
        span = s.y.max() - s.y.min()
        c = cdf_bound_curve(s, [-span - 1, span + 1])
        assert c.lower == pytest.approx([0.0, 1.0], abs=1e-12)
        assert c.upper == pytest.approx([0.0, 1.0], abs=1e-12)

    def test_three_point_staircase(self):
        y1, y0 = [1.0, 2.5, 4.0], [0.0, 1.0, 3.0]
        s = Sample.from_arrays(y1 + y0, [1, 1, 1, 0, 0, 0])
        grid = np.arange(-4, 5.5, 0.25)
        curve = cdf_bound_curve(s, grid)
        assert np.all(np.diff(curve.lower) >= 0) and np.all(np.diff(curve.upper) >= 0)
        for q, lo, hi in zip(grid, curve.lower, curve.upper):
            lo_o, _ = permutation_range(y1, y0, lambda a, b: (a - b < q).astype(float))
            _, hi_o = permutation_range(y1, y0, lambda a, b: (a - b <= q).astype(float))
            assert lo == pytest.approx(lo_o, abs=1e-12)
            assert hi == pytest.approx(hi_o, abs=1e-12)

    def test_unsorted_grid(self, rng):
        with pytest.raises(ConfigurationError):
            cdf_bound_curve(iv_sample(rng, exogenous=True), [1.0, 0.0])


class TestQuantiles:
    def test_degenerate(self):
        s = Sample.from_arrays([1.0, 1.0, 0.0, 0.0], [1, 1, 0, 0])
        assert quantile_identified_set(cdf_bound_curve(s), 0.5) == [(1.0, 1.0)]

    def test_tau_one_is_upper_tail(self, rng):
        s = iv_sample(rng, exogenous=True)
        curve = cdf_bound_curve(s)
        runs = quantile_identified_set(curve, 1.0)
        assert len(runs) == 1 and runs[0][1] == curve.grid[-1]
        start = curve.grid[np.argmax(curve.upper >= 1.0)]
        assert runs[0][0] == start

    def test_direct_evaluation(self, rng):
        for _ in range(10):
            s = iv_sample(rng, n=40, exogenous=True, cells=("a",))
            curve = cdf_bound_curve(s)
            tau = float(rng.uniform(0.05, 0.95))
            m1 = SignedMeasure.from_points(s.y[s.d == 1], np.full((s.d == 1).sum(), 1 / (s.d == 1).sum()))
            m0 = SignedMeasure.from_points(s.y[s.d == 0], np.full((s.d == 0).sum(), 1 / (s.d == 0).sum()))
            keep = []
            for q in curve.grid:
                lo, hi = makarov_closed_form(m1, m0, q)
                keep.append(lo <= tau + 1e-12 and tau - 1e-12 <= hi)
            got = quantile_identified_set(curve, tau)
            inside = np.zeros(curve.grid.size, bool)
            for a, b in got:
                inside |= (curve.grid >= a) & (curve.grid <= b)
            assert list(inside) == keep

    def test_bad_tau(self, rng):
        curve = cdf_bound_curve(iv_sample(rng, exogenous=True))
        with pytest.raises(ConfigurationError):
            quantile_identified_set(curve, 0.0)
