import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from harnacklab.jets import Jet, integrate_jet, solve_linear_ode_jet

X = np.linspace(-1.3, 1.7, 7)


class TestArithmetic:
    def test_variable_and_constant(self):
        j = Jet.variable(X, 3, 2.0)
        np.testing.assert_array_equal(j.derivatives()[:2], [2 * X, np.full_like(X, 2.0)])
        assert np.all(j.coeffs[2:] == 0)
        c = Jet.constant(4.0, 2, X.shape)
        assert np.all(c.derivatives()[0] == 4.0) and np.all(c.coeffs[1:] == 0)

    def test_exp_derivatives(self):
        e = (Jet.variable(X, 6) * 0.7).exp()
        k = np.arange(7)[:, None]
        np.testing.assert_allclose(e.derivatives(), 0.7**k * np.exp(0.7 * X)[None, :], rtol=1e-13)

    def test_sincos_derivatives(self):
        s, c = Jet.variable(X, 5, 3.0).sincos()
        exact_s = [np.sin(3 * X), 3 * np.cos(3 * X), -9 * np.sin(3 * X), -27 * np.cos(3 * X)]
        np.testing.assert_allclose(s.derivatives()[:4], exact_s, atol=1e-12)
        np.testing.assert_allclose(c.derivative(1), -3 * np.sin(3 * X), atol=1e-13)

    def test_quotient(self):
        x = Jet.variable(X, 4)
        q = 1.0 / (x * x + 2.0)
        d1 = -2 * X / (X**2 + 2) ** 2
        d2 = (6 * X**2 - 4) / (X**2 + 2) ** 3
        np.testing.assert_allclose(q.derivative(1), d1, rtol=1e-13)
        np.testing.assert_allclose(q.derivative(2), d2, rtol=1e-12)

    @given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-3, 3))
    @settings(max_examples=50, deadline=None)
    def test_product_rule(self, a, b, x0):
        x = Jet.variable(np.array([x0]), 4)
        f = (x * a).exp()
        g, _ = (x * b).sincos()
        fg = (f * g).derivative(2)
        fd, gd = f.derivatives(), g.derivatives()
        leibniz = fd[2] * gd[0] + 2 * fd[1] * gd[1] + fd[0] * gd[2]
        np.testing.assert_allclose(fg, leibniz, rtol=1e-12, atol=1e-12)

    def test_where_masks(self):
        j = Jet.variable(X, 2).where(X > 0)
        assert np.all(j.coeffs[:, X <= 0] == 0)


class TestOdeJets:
    def test_linear_ode_against_solve_ivp(self):
        # (2 + sin x) y' + cos(x) y = 1 around x0 = 0.3
        x0 = np.array(0.3)
        x = Jet.variable(x0, 6)
        s, c = x.sincos()
        y = solve_linear_ode_jet(0.5, s + 2.0, c, Jet.constant(1.0, 6))
        sol = solve_ivp(lambda t, v: (1 - np.cos(t) * v) / (2 + np.sin(t)), (0.3, 0.35), [0.5], rtol=1e-13, atol=1e-14, dense_output=True)
        h = 0.05
        taylor = sum(y.coeffs[k] * h**k for k in range(y.order + 1))
        assert abs(taylor - sol.sol(0.35)[0]) < 1e-11

    def test_integrate_jet(self):
        x = Jet.variable(X, 3)
        F = integrate_jet(np.sin(X), x.sincos()[1])
        np.testing.assert_allclose(F.derivatives()[:3], [np.sin(X), np.cos(X), -np.sin(X)], atol=1e-14)
        assert F.order == 4
