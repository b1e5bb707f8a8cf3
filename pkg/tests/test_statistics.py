import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as hst

from adaptive_qsv import statistics as st

LN20 = math.log(20)
UNI60 = 3 / 7
LO60 = 0.58898693820123786


class TestKL:
    def test_equal(self):
        assert st.kl_divergence(0.5, 0.5) == 0

    def test_frozen_value(self):
        # 40-digit mpmath reference
        assert st.kl_divergence(0.99, 0.9621) == pytest.approx(0.014977022092859170, rel=1e-12)

    def test_boundary_x(self):
        assert st.kl_divergence(1.0, 0.9) == pytest.approx(-math.log(0.9), rel=1e-14)
        assert st.kl_divergence(0.0, 0.1) == pytest.approx(-math.log(0.9), rel=1e-14)

    @pytest.mark.parametrize("y", [0.0, 1.0, -0.1, 1.5])
    def test_y_must_be_interior(self, y):
        with pytest.raises(ValueError):
            st.kl_divergence(0.5, y)

    @settings(max_examples=200)
    @given(hst.floats(0, 1), hst.floats(1e-6, 1 - 1e-6))
    def test_nonnegative(self, x, y):
        assert st.kl_divergence(x, y) >= 0


class TestConfidenceBound:
    def test_all_accept(self):
        d = st.confidence_bound(200, 200, 1 / 3, 0.0223)
        assert d == pytest.approx((1 - (2 / 3) * 0.0223) ** 200, rel=1e-12)

    def test_at_threshold_is_one(self):
        assert st.confidence_bound(4, 3, 0.5, 0.5) == 1.0

    def test_below_threshold(self):
        with pytest.raises(st.NoClaimError):
            st.confidence_bound(200, 150, 1 / 3, 0.01)

    @pytest.mark.parametrize("eps", [0, 1, -0.5])
    def test_epsilon_domain(self, eps):
        with pytest.raises(ValueError):
            st.confidence_bound(10, 10, 0.3, eps)


class TestInfidelity:
    def test_all_accept_200(self):
        eps = st.infidelity_at_confidence(200, 200, 0.05, 1 / 3)
        assert eps == pytest.approx(0.022300558846908088, abs=1e-12)
        assert 1 / eps == pytest.approx(44.841925570786640, rel=1e-10)

    def test_all_accept_closed_form(self):
        assert st.all_accept_infidelity(200, 0.05, 1 / 3) == pytest.approx(0.022300558846908088, abs=1e-13)
        assert st.infidelity_at_confidence(200, 200, 0.05, 1 / 3) == pytest.approx(
            (1 - 0.05 ** (1 / 200)) / (2 / 3), abs=1e-10
        )

    def test_two_rejections(self):
        eps = st.infidelity_at_confidence(200, 198, 0.05, 1 / 3)
        assert eps == pytest.approx(0.056853213611622863, abs=1e-10)
        assert eps > st.infidelity_at_confidence(200, 200, 0.05, 1 / 3)

    def test_half_accepted_is_weak_but_valid(self):
        # p = 1/2 exceeds the bi-LOCC floor of 1/3, so a (weak) claim exists
        eps = st.infidelity_at_confidence(200, 100, 0.05, 1 / 3)
        assert eps == pytest.approx(0.87884521878579726, abs=1e-10)

    @pytest.mark.parametrize("n,m", [(200, 66), (200, 0), (1, 1), (2, 2), (10, 4)])
    def test_no_claim(self, n, m):
        with pytest.raises(st.NoClaimError):
            st.infidelity_at_confidence(n, m, 0.05, 1 / 3)
        v = st.verdict(n, m, 0.05, 1 / 3)
        assert not v.claim and v.epsilon is None
        assert v.describe().startswith("no claim")

    def test_verdict_claim(self):
        v = st.verdict(200, 198, 0.05, 1 / 3)
        assert v.claim
        assert v.fidelity_lower_bound == pytest.approx(1 - 0.056853213611622863, abs=1e-10)
        assert v.accept_frequency == 0.99

    @pytest.mark.parametrize("bad", [(0, 0), (5, 6), (5, -1)])
    def test_count_domain(self, bad):
        with pytest.raises(ValueError):
            st.infidelity_at_confidence(*bad, 0.05, 0.3)

    @settings(max_examples=300, deadline=None)
    @given(
        hst.integers(1, 5000),
        hst.floats(0, 1),
        hst.floats(1e-6, 0.5),
        hst.floats(0, 0.9),
    )
    def test_round_trip(self, n, frac, delta, lambda2):
        m = round(frac * n)
        try:
            eps = st.infidelity_at_confidence(n, m, delta, lambda2)
        except st.NoClaimError:
            return
        assert 0 < eps < 1
        assert abs(st.confidence_bound(n, m, lambda2, eps) - delta) <= 1e-9

    @settings(max_examples=100, deadline=None)
    @given(hst.integers(2, 2000), hst.floats(1e-4, 0.3), hst.floats(0, 0.9))
    def test_monotone_in_accepts(self, n, delta, lambda2):
        m = n - 1
        try:
            worse = st.infidelity_at_confidence(n, m, delta, lambda2)
        except st.NoClaimError:
            return
        assert st.infidelity_at_confidence(n, n, delta, lambda2) < worse

    @settings(max_examples=100, deadline=None)
    @given(hst.integers(1, 10**6), hst.floats(1e-6, 0.5), hst.floats(0, 0.9))
    def test_all_accept_matches_closed_form(self, n, delta, lambda2):
        closed = float(st.all_accept_infidelity(n, delta, lambda2))
        assume(closed < 1 - 1e-9)
        assert st.infidelity_at_confidence(n, n, delta, lambda2) == pytest.approx(closed, abs=1e-10)


class TestMeasurementBounds:
    def test_global_asymptotic(self):
        assert st.measurement_bound(0.01, 0.05, 0).asymptotic == pytest.approx(299.57322735539910, rel=1e-12)
        assert st.measurement_bound(0.1, 0.05, 0).asymptotic == pytest.approx(29.957322735539910, rel=1e-12)

    def test_global_exact(self):
        b = st.measurement_bound(0.01, 0.05, 0)
        assert b.exact == pytest.approx(298.07285221322295, rel=1e-12)
        assert b.ceiling == 299 == st.global_bound(0.01, 0.05)

    def test_bi(self):
        b = st.measurement_bound(0.01, 0.05, 1 / 3)
        assert b.ceiling == 448
        assert b.exact == pytest.approx(447.86, abs=0.01)

    def test_uni_60(self):
        b = st.measurement_bound(0.01, 0.05, UNI60)
        assert b.exact == pytest.approx(math.log(0.05) / math.log(1 - 0.01 / 1.75), rel=1e-12)
        assert b.ceiling == 523

    def test_ordering(self):
        n = [st.required_measurements(0.01, 0.05, l2) for l2 in (0, 1 / 3, UNI60, LO60)]
        assert n == sorted(n) and len(set(n)) == 4


class TestSlopes:
    @pytest.mark.parametrize(
        "lambda2,slope",
        [
            (LO60, 0.13719953062132493),
            (UNI60, 0.19074754325447660),
            (1 / 3, 0.22253880046355604),
        ],
    )
    def test_asymptotic(self, lambda2, slope):
        assert st.asymptotic_slope(lambda2, 0.05) == pytest.approx(slope, abs=1e-12)
        assert st.asymptotic_slope(lambda2, 0.05) == pytest.approx((1 - lambda2) / LN20, abs=1e-15)

    @pytest.mark.parametrize(
        "lambda2,expected", [(LO60, 0.135397), (UNI60, 0.188242), (1 / 3, 0.219615)]
    )
    def test_ideal_curve_fit(self, lambda2, expected):
        n, inv = st.ideal_curve(lambda2, 0.05, 25)
        assert n[0] == 1 and n[-1] == 25
        assert st.fit_slope(n, inv) == pytest.approx(expected, abs=1e-6)

    def test_record_curve_omits_no_claim(self):
        n, inv = st.record_curve([1] * 25, 0.05, 1 / 3)
        # the first prefixes cannot certify anything below 1
        assert n[0] > 1
        np.testing.assert_allclose(inv, 1 / st.all_accept_infidelity(n, 0.05, 1 / 3), rtol=1e-9)

    def test_record_curve_with_rejections(self):
        bits = [1] * 50 + [0] + [1] * 49
        n, inv = st.record_curve(bits, 0.05, UNI60)
        assert n[-1] == 100
        assert inv[-1] == pytest.approx(1 / st.infidelity_at_confidence(100, 99, 0.05, UNI60))
        # a rejection lowers 1/epsilon
        i50 = list(n).index(50)
        assert inv[i50 + 1] < inv[i50]

    def test_inverse_curve_dispatch(self):
        a = st.inverse_infidelity_curve(1 / 3, 0.05, 10)
        np.testing.assert_array_equal(a[0], np.arange(1, 11))
        b = st.inverse_infidelity_curve(1 / 3, 0.05, 10, bits=[1] * 30)
        assert b[0].max() == 10

    def test_fit_slope_exact_line(self):
        assert st.fit_slope([1, 2, 3], [5, 7, 9]) == pytest.approx(2)
        assert st.fit_proportional([1, 2, 3], [2, 4, 6]) == pytest.approx(2)

    def test_fit_errors(self):
        with pytest.raises(st.FitError):
            st.fit_slope([1], [1])
        with pytest.raises(st.FitError):
            st.fit_slope([2, 2], [1, 3])
        with pytest.raises(st.FitError):
            st.fit_proportional([0, 0], [1, 1])
