import numpy as np
import pytest
from scipy.integrate import quad

from harnacklab.quadrature import ChebPrimitive, clenshaw_rows, gauss_composite


class TestGaussComposite:
    @pytest.mark.parametrize("panels", [1, 4, 16])
    def test_polynomial_exact(self, panels):
        assert gauss_composite(lambda x: x**7 - 3 * x**2, -1.0, 2.0, panels) == pytest.approx(2.0**8 / 8 - 1 / 8 - (8 + 1), rel=1e-14)

    def test_against_scipy_quad(self):
        f = lambda x: np.exp(np.sin(5 * x)) / (1.2 + np.cos(x))
        ref, _ = quad(f, 0.0, 3.0, epsabs=1e-13, epsrel=1e-13, limit=200)
        assert gauss_composite(f, 0.0, 3.0, 16) == pytest.approx(ref, rel=1e-13)


class TestChebPrimitive:
    def test_running_integral(self):
        prim = ChebPrimitive(np.cos, 0.0, 4.0, 8)
        x = np.linspace(0.0, 4.0, 101)
        np.testing.assert_allclose(prim(x), np.sin(x), atol=1e-14)
        assert prim.total == pytest.approx(np.sin(4.0), abs=1e-14)
        np.testing.assert_allclose(prim.integrand(x), np.cos(x), atol=1e-14)

    def test_matches_scipy_for_peaked_integrand(self):
        f = lambda x: 1.0 / (1e-2 + (x - 0.4) ** 2)
        prim = ChebPrimitive(f, 0.0, 1.0, 64)
        ref, _ = quad(f, 0.0, 0.7, points=[0.4], epsabs=1e-13, epsrel=1e-13)
        assert prim(np.array(0.7)) == pytest.approx(ref, rel=1e-11)

    def test_clenshaw_rows_matches_chebval(self):
        rng = np.random.default_rng(3)
        coeffs = rng.normal(size=(5, 9))
        t = rng.uniform(-1, 1, 5)
        ref = [np.polynomial.chebyshev.chebval(t[i], coeffs[i]) for i in range(5)]
        np.testing.assert_allclose(clenshaw_rows(coeffs, t), ref, rtol=1e-13)
