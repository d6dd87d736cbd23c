"""Bloch-wave solver for the two-scale Cauchy problem at very small ``eps``.

In ``tau = t/eps^2`` and ``xi = tau + x/eps`` the equation
``-p(y) u_t + (a(y) u_x)_x = 0`` with ``y = t/eps^2 + x/eps`` becomes
``p V_tau = (a V_xi)_xi - p V_xi`` whose coefficients are 1-periodic in ``xi``
and independent of ``tau``.  On a ring of ``L`` cells the solution is a sum of
Bloch waves ``exp(lam(theta) tau + i theta xi) phi_theta(xi)``.  Only the
principal band is kept: the others decay like ``exp(-4 pi^2 a/p tau)``.

Each cell carries ``M`` nodes with the same flux-form second difference as the
finite-difference solver and a centered first difference for the drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy import fft as sfft
from scipy.linalg import lu_factor, lu_solve

from .parabolic_solver import Field, Profile, SolverError, SpaceTimeGrid
from .periodic_fn import PeriodicFn
from .quadrature import _cheb_setup


@dataclass(frozen=True, eq=False)
class BlochCell:
    """Discretized cell operator ``phi -> p^-1 [D_theta(a D_theta phi) - p D_theta phi]``."""

    a_half: np.ndarray
    p_node: np.ndarray

    @classmethod
    def build(cls, a: PeriodicFn, p: PeriodicFn, M: int = 64) -> "BlochCell":
        k = np.arange(M)
        return cls(a.value_at((k + 0.5) / M), p.value_at(k / M))

    @property
    def M(self) -> int:
        return self.p_node.size

    def matrices(self, theta: np.ndarray) -> np.ndarray:
        """Stack of ``M x M`` complex matrices, one per ``theta``."""
        M = self.M
        h = 1.0 / M
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        ep = np.exp(1j * theta * h)[:, None]
        em = np.conj(ep)
        ar = self.a_half[None, :]
        al = np.roll(self.a_half, 1)[None, :]
        p = self.p_node[None, :]
        # row k couples phi_{k-1}, phi_k, phi_{k+1} (indices mod M)
        up = (ar * ep / h**2 - p * ep / (2 * h)) / p
        lo = (al * em / h**2 + p * em / (2 * h)) / p
        di = np.broadcast_to(-(ar + al) / h**2 / p, up.shape)
        B = np.zeros((theta.size, M, M), dtype=complex)
        idx = np.arange(M)
        B[:, idx, idx] = di
        B[:, idx, (idx + 1) % M] = up
        B[:, idx, (idx - 1) % M] = lo
        return B

    def principal(self, theta, chunk: int = 4096):
        """Principal eigenvalue, right vector (mean 1) and left vector (``psi^H phi = 1``)."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        lam = np.empty(theta.size, dtype=complex)
        phi = np.empty((theta.size, self.M), dtype=complex)
        psi = np.empty((theta.size, self.M), dtype=complex)
        for s in range(0, theta.size, chunk):
            B = self.matrices(theta[s : s + chunk])
            w, V = np.linalg.eig(B)
            i = np.argmax(w.real, axis=1)
            rows = np.arange(B.shape[0])
            lam[s : s + chunk] = w[rows, i]
            r = V[rows, :, i]
            r = r / r.mean(axis=1, keepdims=True)
            wl, W = np.linalg.eig(np.conj(np.transpose(B, (0, 2, 1))))
            il = np.argmax(wl.real, axis=1)
            lft = W[rows, :, il]
            norm = np.einsum("ij,ij->i", np.conj(lft), r)
            psi[s : s + chunk] = lft / np.conj(norm)[:, None]
            phi[s : s + chunk] = r
        return lam, phi, psi

    def principal_interpolated(self, theta, nodes: int = 48):
        """:meth:`principal` through Chebyshev interpolation in ``theta``.

        The principal band is analytic near ``theta = 0``, so a few dozen
        eigen-solves on ``[-max|theta|, max|theta|]`` replace one per mode.
        """
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.size <= 2 * nodes:
            return self.principal(theta)
        t_ref, vinv = _cheb_setup(nodes - 1)
        tmax = float(np.max(np.abs(theta)))
        lam, phi, psi = self.principal(tmax * t_ref)
        u = theta / tmax
        V = C.chebvander(u, nodes - 1)
        # values at Chebyshev points -> coefficients -> target thetas
        W = V @ vinv
        return W @ lam, W @ phi, W @ psi

    def taylor(self, order: int = 12):
        """Taylor coefficients in ``theta`` of the principal triple at ``theta = 0``.

        Perturbation series from linear solves with the ``theta = 0`` matrix.
        Eigen-solvers lose ``1e-16 ||B||`` absolutely, which is far too much
        once ``lam`` is multiplied by ``tau ~ eps^-1``; these solves keep the
        relative accuracy of the small eigenvalue.
        """
        M = self.M
        h = 1.0 / M
        ar = self.a_half
        al = np.roll(self.a_half, 1)
        p = self.p_node
        up0 = ar / h**2 / p - 1 / (2 * h)
        lo0 = al / h**2 / p + 1 / (2 * h)
        idx = np.arange(M)

        def B_k(k):
            B = np.zeros((M, M), dtype=complex)
            fac = 1.0 / math.factorial(k)
            B[idx, (idx + 1) % M] = up0 * (1j * h) ** k * fac
            B[idx, (idx - 1) % M] = lo0 * (-1j * h) ** k * fac
            if k == 0:
                B[idx, idx] = -(ar + al) / h**2 / p
            return B

        Bs = [B_k(k) for k in range(order + 1)]
        B0 = Bs[0]
        one = np.ones(M, dtype=complex)
        # left null vector with 1^H psi0 = 1
        Kl = np.zeros((M + 1, M + 1), dtype=complex)
        Kl[:M, :M] = B0.conj().T
        Kl[:M, M] = one
        Kl[M, :M] = one
        psi0 = np.linalg.solve(Kl, np.r_[np.zeros(M), 1.0])[:M]
        Kr = np.zeros_like(Kl)
        Kr[:M, :M] = B0
        Kr[:M, M] = one
        Kr[M, :M] = psi0.conj()
        Kl[:M, M] = psi0
        lu_r = lu_factor(Kr)
        lu_l = lu_factor(Kl)
        lam = np.zeros(order + 1, dtype=complex)
        phi = [one]
        psi = [psi0]
        for n in range(1, order + 1):
            acc = sum(Bs[k] @ phi[n - k] for k in range(1, n + 1))
            lam[n] = psi0.conj() @ acc
            rhs = sum(lam[k] * phi[n - k] for k in range(1, n + 1)) - acc
            phi.append(lu_solve(lu_r, np.r_[rhs, 0.0])[:M])
            accl = sum(Bs[k].conj().T @ psi[n - k] for k in range(1, n + 1))
            rhsl = sum(np.conj(lam[k]) * psi[n - k] for k in range(1, n + 1)) - accl
            psi.append(lu_solve(lu_l, np.r_[rhsl, 0.0])[:M])
        return lam, np.array(phi), np.array(psi)

    def principal_series(self, theta, order: int = 12):
        """:meth:`principal` from the Taylor series; valid for small ``|theta|``."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        lam_k, phi_k, psi_k = self.taylor(order)
        pw = theta[:, None] ** np.arange(order + 1)[None, :]
        lam = pw @ lam_k
        phi = pw @ phi_k
        psi = pw @ psi_k
        norm = np.einsum("ij,ij->i", np.conj(psi), phi)
        psi = psi / np.conj(norm)[:, None]
        mean = phi.mean(axis=1, keepdims=True)
        return lam, phi / mean, psi * np.conj(mean)


def effective_velocity(cell: BlochCell) -> float:
    """``-Im lam'(0)``: the drift of the principal band in ``xi`` per unit ``tau``."""
    lam, _, _ = cell.taylor(1)
    return float(-lam[1].imag)


@dataclass(frozen=True)
class BlochPolicy:
    """Resolution settings of the Bloch solver."""

    nodes_per_cell: int = 256
    spectrum_tol: float = 1e-15
    max_ring: int = 1 << 24
    exact_projection_limit: int = 1 << 22
    theta_nodes: int = 48
    series_order: int = 12
    series_radius: float = 0.5


def solve_two_scale_bloch(
    a: PeriodicFn,
    p: PeriodicFn,
    eps: float,
    g: Profile,
    times,
    x_lo: float,
    x_hi: float,
    dx: float,
    policy: BlochPolicy = BlochPolicy(),
) -> Field:
    """Principal-band Bloch solution sampled on ``times`` x uniform ``x``.

    Parameters
    ----------
    a, p : PeriodicFn
        1-periodic cell coefficients.
    eps : float
        Period of the oscillation in ``x``.
    g : Profile
        Initial profile; ``[x_lo, x_hi]`` must contain its support with room
        for the solution to travel and spread without wrapping the ring.
    times : array_like
        Output times (rounded so that ``t/eps^2`` is a multiple of ``1/M``).
    x_lo, x_hi, dx : float
        Output window and spacing; ``x_lo`` and ``dx`` are snapped to
        multiples of ``eps``.
    """
    M = policy.nodes_per_cell
    if x_hi <= x_lo:
        raise ValueError("empty output window")
    stride = max(1, int(round(dx / eps)))
    x_lo = np.floor(x_lo / eps) * eps
    n_out = int(np.ceil((x_hi - x_lo) / (eps * stride))) + 1
    L = stride * n_out
    if L > policy.max_ring:
        raise SolverError(f"eps = {eps:g} needs a ring of {L} cells (cap {policy.max_ring})")
    cell = BlochCell.build(a, p, M)
    m = np.arange(L)
    j = np.rint(sfft.fftfreq(L) * L).astype(np.int64)
    theta = 2 * np.pi * j / L
    exact = L * M <= policy.exact_projection_limit
    if exact:
        k = np.arange(M)
        V0 = g(x_lo + eps * (m[:, None] + k[None, :] / M))
        # F[j, k] = sum_m V0[m, k] exp(-i theta_j (m + k/M))
        F = sfft.fft(V0, axis=0) * np.exp(-1j * theta[:, None] * k[None, :] / M)
        mag = np.abs(F).max(axis=1)
    else:
        # g varies on scales far above eps: the Bloch transform is constant across a cell
        F = sfft.fft(g(x_lo + eps * m))
        mag = np.abs(F)
    active = np.nonzero(mag > policy.spectrum_tol * mag.max())[0]
    if np.max(np.abs(theta[active])) <= policy.series_radius:
        lam, phi, psi = cell.principal_series(theta[active], policy.series_order)
    else:
        lam, phi, psi = cell.principal_interpolated(theta[active], policy.theta_nodes)
    if np.max(lam.real) > 1e-8:
        raise SolverError("principal band has a growing mode; increase nodes_per_cell")
    if exact:
        coef = np.einsum("ij,ij->i", np.conj(psi), F[active])
    else:
        coef = F[active] * np.conj(psi).sum(axis=1)
    # exp(lam tau + i theta tau) removes the frame speed so no large phase is formed
    slow = lam + 1j * theta[active]
    fold = j[active] % n_out
    times = np.asarray(times, dtype=float)
    ticks = np.round(times / eps**2 * M).astype(np.int64)
    t_out = ticks.astype(float) / M * eps**2
    x = x_lo + eps * stride * np.arange(n_out)
    rows = np.empty((t_out.size, n_out))
    for r, tick in enumerate(ticks):
        kk = int(tick % M)
        vals = coef * np.exp(slow * (tick / M)) * phi[:, kk]
        folded = np.bincount(fold, vals.real, n_out) + 1j * np.bincount(fold, vals.imag, n_out)
        rows[r] = (np.fft.ifft(folded) * (n_out / L)).real
    grid = SpaceTimeGrid(x[0], x[-1], n_out - 1, max(float(t_out[-1]), eps**2), max(1, t_out.size - 1))
    meta = {"eps": eps, "ring_cells": L, "nodes_per_cell": M, "active_modes": int(active.size), "exact_projection": exact}
    return Field(grid, t_out, rows, 0.5, "ring", meta)
