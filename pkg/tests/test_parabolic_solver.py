
import numpy as np
import pytest

from harnacklab.elliptic_cell import travelling_family
from harnacklab.parabolic_solver import (
    EXPLICIT,
    MIDPOINT,
    BoundaryInfluenceWarning,
    CoefficientField,
    GridPolicy,
    SolverError,
    SpaceTimeGrid,
    bump_profile,
    corrector_comparison,
    solve_cauchy,
    transport_reference,
    travelling_coefficients,
    two_scale_grid,
)
from harnacklab.periodic_fn import constant, trig


def mms_problem():
    """``u = exp(-t) sin(pi x)`` on ``[0, 1]`` with ``p = 1 + 0.3 cos x`` and ``a = 1 + 0.5 sin(2x + t)``."""
    p = lambda t, x: 1 + 0.3 * np.cos(x) + 0 * t
    a = lambda t, x: 1 + 0.5 * np.sin(2 * x + t)
    exact = lambda t, x: np.exp(-t) * np.sin(np.pi * x)

    def f(t, x):
        ux = np.pi * np.exp(-t) * np.cos(np.pi * x)
        uxx = -np.pi**2 * exact(t, x)
        return np.cos(2 * x + t) * ux + a(t, x) * uxx + p(t, x) * exact(t, x)

    return CoefficientField(p, a, f), exact


class TestSolveCauchy:
    def test_manufactured_second_order(self):
        coeffs, exact = mms_problem()
        errs = []
        for n in (32, 64, 128):
            grid = SpaceTimeGrid(0.0, 1.0, n, 0.5, n)
            fld = solve_cauchy(coeffs, lambda x: exact(0.0, x), grid, warn_boundary=False)
            errs.append(np.max(np.abs(fld.values[-1] - exact(0.5, fld.x))))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(orders > 1.9)

    def test_heat_mode(self):
        coeffs = CoefficientField(lambda t, x: np.ones_like(x), lambda t, x: np.ones_like(x))
        grid = SpaceTimeGrid(0.0, 1.0, 256, 0.1, 256)
        fld = solve_cauchy(coeffs, lambda x: np.sin(np.pi * x), grid, warn_boundary=False)
        assert np.max(np.abs(fld.values[-1] - np.exp(-np.pi**2 * 0.1) * np.sin(np.pi * fld.x))) <= 1e-4

    def test_maximum_principle(self):
        fam = travelling_family()
        coeffs = travelling_coefficients(fam.a, fam.p, 0.1)
        g = bump_profile(0.0, 0.3)
        fld = solve_cauchy(coeffs, g, SpaceTimeGrid(-3.0, 3.0, 1200, 0.2, 400))
        assert fld.values.min() >= -1e-12
        assert fld.values.max() <= 1.0 + 1e-12

    def test_explicit_matches_midpoint(self):
        coeffs, exact = mms_problem()
        g = lambda x: exact(0.0, x)
        mid = solve_cauchy(coeffs, g, SpaceTimeGrid(0.0, 1.0, 64, 0.1, 1200), MIDPOINT, warn_boundary=False)
        exp_ = solve_cauchy(coeffs, g, SpaceTimeGrid(0.0, 1.0, 64, 0.1, 1200), EXPLICIT, warn_boundary=False)
        assert np.max(np.abs(mid.values[-1] - exp_.values[-1])) <= 1e-4

    def test_explicit_stability_guard(self):
        coeffs, exact = mms_problem()
        with pytest.raises(SolverError):
            solve_cauchy(coeffs, lambda x: exact(0.0, x), SpaceTimeGrid(0.0, 1.0, 64, 0.1, 10), EXPLICIT)

    def test_boundary_warning(self):
        coeffs = CoefficientField(lambda t, x: np.ones_like(x), lambda t, x: np.ones_like(x))
        with pytest.warns(BoundaryInfluenceWarning):
            solve_cauchy(coeffs, bump_profile(0.0, 0.9), SpaceTimeGrid(-1.0, 1.0, 64, 0.5, 64))

    def test_bounds_checked(self):
        coeffs = CoefficientField(lambda t, x: np.ones_like(x), lambda t, x: 3.0 * np.ones_like(x))
        with pytest.raises(SolverError):
            solve_cauchy(coeffs, bump_profile(), SpaceTimeGrid(-1.0, 1.0, 64, 0.1, 8))

    def test_unknown_scheme(self):
        coeffs, _ = mms_problem()
        with pytest.raises(ValueError):
            solve_cauchy(coeffs, np.sin, SpaceTimeGrid(0.0, 1.0, 32, 0.1, 8), "crank")

    def test_store_every_keeps_last(self):
        coeffs, exact = mms_problem()
        fld = solve_cauchy(coeffs, lambda x: exact(0.0, x), SpaceTimeGrid(0.0, 1.0, 32, 0.1, 10), store_every=3, warn_boundary=False)
        np.testing.assert_allclose(fld.t, [0.0, 0.03, 0.06, 0.09, 0.1])


class TestGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            SpaceTimeGrid(0.0, 1.0, 8, 1.0, 4)
        with pytest.raises(ValueError):
            SpaceTimeGrid(1.0, 0.0, 32, 1.0, 4)

    def test_caps(self):
        with pytest.raises(SolverError):
            two_scale_grid(bump_profile(), 1e-4, 1.0, 0.0, 1.0, 1.0, GridPolicy())

    def test_spacing(self):
        grid = two_scale_grid(bump_profile(), 0.1, 0.2, 0.0, 1.0, 1.0)
        assert grid.h <= 0.1 / 16 * (1 + 1e-12)
        assert grid.dt <= 0.01 / 16 * (1 + 1e-12)


class TestTwoScale:
    def test_travelling_coefficients_argument(self):
        a, p = constant(1.0) + trig(1, "cos", 0.3, 0.0), constant(1.0)
        cf = travelling_coefficients(a, p, 0.1)
        t, x = 0.013, 0.27
        assert cf.a_at(t, np.array([x]))[0] == pytest.approx(1 + 0.3 * np.cos(2 * np.pi * (t / 0.01 + x / 0.1)))

    def test_transport_reference(self):
        g = bump_profile(0.0, 0.5)
        assert transport_reference(g, -0.5, 0.1, 0.2, 1.0) == pytest.approx(float(g(0.0)))

    def test_corrector_gap_scales_with_eps(self):
        fam = travelling_family()
        g = bump_profile(0.0, 4.0)
        reps = [corrector_comparison(fam.a, fam.p, eps, g, 0.3) for eps in (0.2, 0.1)]
        assert reps[0].max_corrector_gap / reps[1].max_corrector_gap == pytest.approx(2.0, rel=0.05)
        assert reps[0].c < 0
        assert all(r.max_Lw < 3.0 for r in reps)
