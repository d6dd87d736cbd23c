import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad, solve_ivp

from harnacklab.elliptic_cell import (
    CellError,
    DriftCoeffs,
    check_sign_relation,
    construct_p_from_v,
    effective_transport,
    exact_operator_residual,
    fd_operator_residual,
    flux_adjoint_residual,
    fundamental_u0,
    fundamental_u0_scaled,
    invariant_density,
    log_fundamental_u0,
    mixed_family,
    particular_U,
    random_pair,
    solve_cell,
    travelling_adjoint_residual,
    travelling_family,
)
from harnacklab.periodic_fn import constant, trig

RTOL = dict(rtol=1e-12, atol=1e-13)


def smooth_pair():
    a = constant(1.25) + trig(1, "cos", 0.3, 0.4)
    beta = constant(0.4) + trig(1, "sin", 0.5, 1.1) + trig(2, "cos", 0.2, 0.0)
    return a, beta


def density_oracle(a, beta, x):
    """``q = a v`` solves ``q' = (beta/a) q + J``; periodicity and unit mass fix ``q(0)`` and ``J``."""

    def run(q0, J):
        rhs = lambda s, y: [beta.value_at(s) / a.value_at(s) * y[0] + J, y[0] / a.value_at(s)]
        return solve_ivp(rhs, (0, 1), [q0, 0.0], dense_output=True, **RTOL)

    s1, s2 = run(1.0, 0.0), run(0.0, 1.0)
    e1, e2 = s1.y[:, -1], s2.y[:, -1]
    # rows: q(1) - q(0) = 0 and mass = 1
    A = np.array([[e1[0] - 1.0, e2[0]], [e1[1], e2[1]]])
    q0, J = np.linalg.solve(A, [0.0, 1.0])
    q = q0 * s1.sol(x)[0] + J * s2.sol(x)[0]
    return q / a.value_at(x), J


def corrector_oracle(a, beta, f, x):
    """Shoot ``a u'' + beta u' = f - f0`` from ``u(0) = 0`` on the unknowns ``u'(0)`` and ``f0``."""

    def run(du0, f0, forcing):
        def rhs(s, y):
            g = (f.value_at(s) if forcing else 0.0) - f0
            return [y[1], (g - beta.value_at(s) * y[1]) / a.value_at(s)]

        return solve_ivp(rhs, (0, 1), [0.0, du0], dense_output=True, **RTOL)

    base, e1, e2 = run(0.0, 0.0, True), run(1.0, 0.0, False), run(0.0, 1.0, False)
    end = lambda s: np.array([s.y[0, -1], s.y[1, -1] - s.y[1, 0]])
    A = np.column_stack([end(e1), end(e2)])
    du0, f0 = np.linalg.solve(A, -end(base))
    return base.sol(x)[0] + du0 * e1.sol(x)[0] + f0 * e2.sol(x)[0], f0


class TestDriftCoeffs:
    def test_bounds_enforced(self):
        with pytest.raises(CellError):
            DriftCoeffs(constant(3.0), constant(0.0), nu=0.5)

    def test_nu_range(self):
        with pytest.raises(ValueError):
            DriftCoeffs(constant(1.0), constant(0.0), nu=0.0)


class TestInvariantDensity:
    def test_constant_coefficients(self):
        cell = invariant_density(DriftCoeffs(constant(1.0), constant(0.7)))
        x = np.linspace(0, 1, 17)
        np.testing.assert_allclose(cell.v.value_at(x), 1.0, atol=1e-13)
        assert cell.b0 == pytest.approx(0.7, abs=1e-13)

    def test_against_ode_oracle(self):
        a, beta = smooth_pair()
        cell = invariant_density(DriftCoeffs(a, beta))
        x = np.linspace(0, 1, 41)
        v_ref, J = density_oracle(a, beta, x)
        np.testing.assert_allclose(cell.v.value_at(x), v_ref, rtol=1e-9, atol=1e-10)
        assert cell.c_flux == pytest.approx(J, abs=1e-9)

    def test_unit_mass_and_flux(self):
        a, beta = smooth_pair()
        cell = invariant_density(DriftCoeffs(a, beta))
        mass, _ = quad(cell.v.value_at, 0, 1, epsabs=1e-13)
        assert mass == pytest.approx(1.0, abs=1e-11)
        assert flux_adjoint_residual(cell) <= 1e-10

    def test_divergence_form_has_zero_drift_average(self):
        a = constant(1.25) + trig(1, "cos", 0.3, 0.4)
        cell = invariant_density(DriftCoeffs(a, a.derivative()))
        assert cell.b0 == pytest.approx(0.0, abs=1e-12)
        assert cell.G_per_period == pytest.approx(0.0, abs=1e-12)


class TestCorrector:
    @pytest.mark.parametrize("k", [1, 2])
    def test_against_shooting_oracle(self, k):
        a, beta = smooth_pair()
        f = trig(k, "sin", 1.0, 0.2) + 0.5
        cor = solve_cell(DriftCoeffs(a, beta), f)
        x = np.linspace(0, 1, 33)
        u_ref, f0 = corrector_oracle(a, beta, f, x)
        assert cor.f0 == pytest.approx(f0, abs=1e-9)
        np.testing.assert_allclose(cor.u.value_at(x), u_ref, atol=1e-9)

    def test_residuals_and_periodicity(self):
        a, beta = smooth_pair()
        coeffs = DriftCoeffs(a, beta)
        cor = solve_cell(coeffs, beta)
        assert exact_operator_residual(coeffs, cor.u, cor.rhs) <= 1e-9
        assert fd_operator_residual(coeffs, cor.u, cor.rhs) <= 1e-3
        gap_u, gap_du = cor.periodicity_gap()
        assert gap_u <= 1e-12 and gap_du <= 1e-10

    def test_pinned_at_origin(self):
        a, beta = smooth_pair()
        cor = solve_cell(DriftCoeffs(a, beta), a)
        assert float(cor.u.value_at(0.0)) == pytest.approx(0.0, abs=1e-14)


class TestFundamentalSolutions:
    def test_u0_derivative_is_exp_minus_G(self):
        a, beta = smooth_pair()
        coeffs = DriftCoeffs(a, beta)
        cell = invariant_density(coeffs)
        x = np.array([-2.3, -0.4, 0.7, 3.1])
        for xi, u in zip(x, fundamental_u0(coeffs, x)):
            ref, _ = quad(lambda s: np.exp(-cell.G(s)), 0, xi, epsabs=1e-13, limit=200)
            assert u == pytest.approx(ref, rel=1e-10)

    def test_log_and_scaled_agree(self):
        a, beta = smooth_pair()
        coeffs = DriftCoeffs(a, beta)
        x = np.linspace(0.05, 6.0, 50)
        lg = log_fundamental_u0(coeffs, x)
        np.testing.assert_allclose(lg, np.log(fundamental_u0(coeffs, x)), rtol=1e-12)
        m, scale = fundamental_u0_scaled(coeffs, x)
        assert m.max() == pytest.approx(1.0)
        np.testing.assert_allclose(m * np.exp(scale), fundamental_u0(coeffs, x), rtol=1e-12)

    def test_particular_solves_operator(self):
        a, beta = smooth_pair()
        coeffs = DriftCoeffs(a, beta)
        f = trig(1, "cos", 1.0, 0.0)
        x = np.linspace(-1.5, 2.5, 4001)
        U = particular_U(coeffs, f, x)
        h = x[1] - x[0]
        r = a.value_at(x[1:-1]) * np.diff(U, 2) / h**2 + beta.value_at(x[1:-1]) * (U[2:] - U[:-2]) / (2 * h) - f.value_at(x[1:-1])
        assert np.max(np.abs(r)) <= 1e-5
        assert float(particular_U(coeffs, f, 0.0)) == 0.0


class TestSignRelation:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_random_pairs_agree(self, seed):
        a, b = random_pair(np.random.default_rng(seed))
        _, _, agree = check_sign_relation(a, b)
        assert agree

    @pytest.mark.parametrize("sign", [-1.0, 1.0])
    def test_constant_drift(self, sign):
        b0, G1, agree = check_sign_relation(constant(1.0), constant(sign * 0.3))
        assert agree and np.sign(b0) == sign and np.sign(G1) == sign


class TestFamilies:
    def test_mixed_family_coefficients(self):
        fam = mixed_family()
        x = np.linspace(0, 1, 101)
        np.testing.assert_allclose(fam.a.value_at(x), fam.a1.value_at(x) + fam.a2.value_at(x))
        assert quad(fam.b.value_at, 0, 1, epsabs=1e-13, limit=200)[0] == pytest.approx(0.0, abs=1e-10)

    def test_travelling_family_identity(self):
        fam = travelling_family()
        x = np.linspace(0, 1, 513)
        flux = fam.a.value_at(x) * fam.v.derivative_at(x) + fam.p.value_at(x) * fam.v.value_at(x)
        np.testing.assert_allclose(flux, 1.0, atol=1e-12)
        assert travelling_adjoint_residual(fam.a, fam.p, fam.v) <= 1e-9
        assert fam.p.value_at(x).min() >= 0.5 and fam.p.value_at(x).max() <= 2.0

    def test_p_out_of_bounds(self):
        with pytest.raises(CellError):
            construct_p_from_v(constant(1.0), trig(1, "sin", 0.9, 0.0), nu=0.5)

    def test_effective_transport_constant(self):
        p0, b0, c = effective_transport(constant(1.0), constant(1.0))
        assert (p0, b0, c) == pytest.approx((1.0, 0.0, 0.0), abs=1e-13)

    def test_effective_transport_sign(self):
        fam = travelling_family()
        p0, b0, c = effective_transport(fam.a, fam.p)
        assert c < 0 and c == pytest.approx(b0 / p0)
