import numpy as np
import pytest

from harnacklab.bloch import BlochCell, BlochPolicy, effective_velocity, solve_two_scale_bloch
from harnacklab.elliptic_cell import effective_transport, travelling_family
from harnacklab.parabolic_solver import SolverError, SpaceTimeGrid, bump_profile, solve_cauchy, travelling_coefficients
from harnacklab.periodic_fn import constant


@pytest.fixture(scope="module")
def family():
    return travelling_family()


class TestBlochCell:
    def test_constant_coefficients_symbol(self):
        M = 32
        cell = BlochCell.build(constant(1.0), constant(1.0), M)
        theta = np.linspace(-1.0, 1.0, 7)
        lam, phi, _ = cell.principal(theta)
        h = 1.0 / M
        np.testing.assert_allclose(lam, (2 * np.cos(theta * h) - 2) / h**2 - 1j * np.sin(theta * h) / h, atol=1e-9)
        np.testing.assert_allclose(phi, 1.0, atol=1e-10)

    def test_series_matches_eigensolver(self, family):
        cell = BlochCell.build(family.a, family.p, 128)
        theta = np.linspace(-0.4, 0.4, 9)
        lam_e, phi_e, psi_e = cell.principal(theta)
        lam_s, phi_s, psi_s = cell.principal_series(theta)
        np.testing.assert_allclose(lam_s, lam_e, atol=1e-8)
        np.testing.assert_allclose(phi_s, phi_e, atol=1e-7)
        np.testing.assert_allclose(np.einsum("ij,ij->i", np.conj(psi_s), phi_s), 1.0, atol=1e-12)

    def test_principal_eigenvalue_at_zero(self, family):
        lam, phi, _ = BlochCell.build(family.a, family.p, 64).taylor(2)
        assert abs(lam[0]) <= 1e-12
        np.testing.assert_allclose(phi[0], 1.0)

    def test_velocity_converges_to_frame_minus_c(self, family):
        target = 1.0 - effective_transport(family.a, family.p)[2]
        errs = [abs(effective_velocity(BlochCell.build(family.a, family.p, M)) - target) for M in (64, 128, 256)]
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] <= 5e-6


class TestTwoScaleBloch:
    def test_agrees_with_finite_differences(self, family):
        eps, r = 0.1, 32
        g = bump_profile(0.0, 0.5)
        times = eps**2 * np.array([5.0, 20.0])
        bl = solve_two_scale_bloch(family.a, family.p, eps, g, times, -3.0, 3.0, eps, BlochPolicy(nodes_per_cell=128))
        grid = SpaceTimeGrid(-3.0, 3.0, int(round(6 / eps)) * r, times[-1], 20 * r)
        fd = solve_cauchy(travelling_coefficients(family.a, family.p, eps), g, grid, store_every=r, warn_boundary=False)
        np.testing.assert_allclose(fd.x[::r], bl.x, atol=1e-12)
        for i, t in enumerate(bl.t):
            k = int(np.argmin(np.abs(fd.t - t)))
            assert fd.t[k] == pytest.approx(t)
            assert np.max(np.abs(fd.values[k, ::r] - bl.values[i])) <= 1e-3

    def test_small_eps_transport(self, family):
        c = effective_transport(family.a, family.p)[2]
        eps = 2.0**-14
        g = bump_profile(0.0, 0.2)
        t = -eps / c
        fld = solve_two_scale_bloch(family.a, family.p, eps, g, [0.0, t], -0.5, 1.5, 0.002, BlochPolicy(nodes_per_cell=64))
        # the principal-band projection moves g by O(eps)
        np.testing.assert_allclose(fld.values[0], g(fld.x), atol=1e-4)
        # diffusion is O(1) at this eps; the peak still rides the transport
        shift = -c * fld.t[1] / eps
        assert fld.x[np.argmax(fld.values[1])] == pytest.approx(shift, abs=0.02)

    def test_empty_window(self, family):
        with pytest.raises(ValueError):
            solve_two_scale_bloch(family.a, family.p, 0.1, bump_profile(), [0.0], 1.0, 0.0, 0.1)

    def test_ring_cap(self, family):
        with pytest.raises(SolverError):
            solve_two_scale_bloch(family.a, family.p, 1e-9, bump_profile(), [0.0], -1.0, 1.0, 1e-9, BlochPolicy(max_ring=1024))
