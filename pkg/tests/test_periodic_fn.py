import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from harnacklab.periodic_fn import (
    ELLIPTIC,
    PARABOLIC,
    PARABOLIC_MAX_SLOPE,
    BumpSpec,
    antiderivative,
    constant,
    make_bump,
    make_eta_pair,
    quad_period,
    rescale_fast,
    trig,
    two_scale_evaluator,
)


def _bump_ref(x, c, w, h):
    s = (x - c) / w
    return h * np.exp(1 - 1 / (1 - s**2)) if abs(s) < 1 else 0.0


class TestBumps:
    def test_center_value_and_support(self):
        b = make_bump(BumpSpec(0.3, 0.1, 0.25))
        assert b(0.3) == pytest.approx(0.25, rel=1e-15)
        x = np.array([0.19, 0.2, 0.4, 0.41, 0.9, 1.3, -0.7])
        np.testing.assert_array_equal(b(x) == 0, [True, True, True, True, True, False, False])
        assert b(1.3) == pytest.approx(0.25)

    def test_integral_against_scipy(self):
        b = make_bump(BumpSpec(0.6, 0.2, 1.5))
        ref, _ = quad(_bump_ref, 0.4, 0.8, args=(0.6, 0.2, 1.5), epsabs=1e-14, epsrel=1e-12)
        assert quad_period(b) == pytest.approx(ref, rel=1e-12)

    def test_derivative_against_finite_difference(self):
        b = make_bump(BumpSpec(0.5, 0.3))
        x = np.linspace(0.25, 0.75, 11)
        h = 1e-5
        fd = (b(x + h) - b(x - h)) / (2 * h)
        np.testing.assert_allclose(b.derivative_at(x), fd, atol=1e-8)

    def test_wide_bump_rejected(self):
        with pytest.raises(ValueError):
            make_bump(BumpSpec(0.5, 0.5))


class TestArithmetic:
    def test_constant_and_trig(self):
        f = trig(2, "sin", 0.5, 0.1) * 2.0 + constant(1.0)
        x = np.linspace(0, 1, 9)
        np.testing.assert_allclose(f(x), 1 + np.sin(4 * np.pi * x + 0.1), atol=1e-15)
        np.testing.assert_allclose(f.derivative()(x), 4 * np.pi * np.cos(4 * np.pi * x + 0.1), atol=1e-13)
        assert quad_period(f) == pytest.approx(1.0, abs=1e-14)

    def test_quotient_and_exp(self):
        a = 2.0 + trig(1)
        f = (trig(1, "sin") / a).exp()
        x = np.linspace(0, 1, 7)
        np.testing.assert_allclose(f(x), np.exp(np.sin(2 * np.pi * x) / (2 + np.cos(2 * np.pi * x))), rtol=1e-14)

    @given(st.floats(-50, 50))
    @settings(max_examples=40, deadline=None)
    def test_antiderivative_periods(self, x):
        f = 1.5 + trig(3, "cos", 0.4)
        exact = 1.5 * x + 0.4 * np.sin(6 * np.pi * x) / (6 * np.pi)
        assert antiderivative(f, np.array(x)) == pytest.approx(exact, abs=1e-11)

    def test_rescale(self):
        f = trig(1, "sin")
        g = rescale_fast(f, 0.1)
        x = np.linspace(0, 0.3, 5)
        np.testing.assert_allclose(g(x), np.sin(20 * np.pi * x), atol=1e-13)
        np.testing.assert_allclose(g.derivative_at(x), 20 * np.pi * np.cos(20 * np.pi * x), atol=1e-11)
        assert g.period == pytest.approx(0.1)
        t = np.array([0.013])
        np.testing.assert_allclose(two_scale_evaluator(f, 0.1)(t, x[:1]), np.sin(2 * np.pi * (t / 0.01 + x[:1] / 0.1)), atol=1e-12)


class TestEtaPairs:
    @pytest.mark.parametrize("variant", [ELLIPTIC, PARABOLIC])
    def test_support_inside_rising_set(self, variant):
        pair = make_eta_pair(0.25, variant)
        assert pair.support_margin() > 0
        assert pair.eta1(np.linspace(0, 1, 2001)).max() == pytest.approx(0.25, rel=1e-6)

    def test_parabolic_pair_has_zero_mean_and_capped_slope(self):
        pair = make_eta_pair(0.25, PARABOLIC)
        assert abs(quad_period(pair.eta2)) < 1e-13
        x = np.linspace(0, 1, 20001)
        assert np.max(np.abs(pair.eta2.derivative_at(x))) <= PARABOLIC_MAX_SLOPE * (1 + 1e-6)
        assert quad_period(pair.eta1.derivative() * pair.eta2) < 0

    @pytest.mark.parametrize("variant", [ELLIPTIC, PARABOLIC])
    def test_eta1_weights_the_rising_part(self, variant):
        pair = make_eta_pair(0.25, variant)
        assert quad_period(pair.eta1 * pair.eta2.derivative()) > 0

    @pytest.mark.parametrize("delta0", [0.0, 0.6])
    def test_bad_delta0(self, delta0):
        with pytest.raises(ValueError):
            make_eta_pair(delta0)
