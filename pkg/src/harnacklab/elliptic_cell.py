"""Fundamental solutions, invariant densities and correctors of 1D periodic operators.

The operator is ``L u = a u'' + beta u'`` with 1-periodic (or ``P``-periodic)
``a > 0`` and ``beta``.  Everything is built from the log-density
``G(x) = int_0^x beta/a`` and running integrals of ``exp(+-G)``, which are
represented to near machine precision by piecewise Chebyshev primitives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .jets import Jet, integrate_jet, solve_linear_ode_jet
from .periodic_fn import PeriodicFn, constant, quad_period, trig
from .quadrature import ChebPrimitive

#: Below this ``|G(period)|`` the flux constant is taken to be zero.
DEGENERATE_G1 = 1e-12
RESIDUAL_POINTS = 4096


class CellError(ValueError):
    """Invalid or degenerate cell problem."""


def _panels(*fns: PeriodicFn) -> int:
    scale = min(f.feature_scale for f in fns)
    period = max(f.period for f in fns if not f.is_constant) if any(not f.is_constant for f in fns) else 1.0
    return max(32, int(np.ceil(4 * period / scale)))


@dataclass(frozen=True, eq=False)
class DriftCoeffs:
    """The pair ``(a, beta)`` describing ``L u = a u'' + beta u'``.

    Parameters
    ----------
    a : PeriodicFn
        Diffusion coefficient, checked against ``nu <= a <= 1/nu``.
    beta : PeriodicFn
        Drift coefficient.
    nu : float
        Ellipticity bound.
    """

    a: PeriodicFn
    beta: PeriodicFn
    nu: float = 0.5

    def __post_init__(self):
        if not 0 < self.nu <= 1:
            raise ValueError("nu must lie in (0, 1]")
        x = np.arange(RESIDUAL_POINTS) * (self.period / RESIDUAL_POINTS)
        av = self.a.value_at(x)
        if av.min() < self.nu * (1 - 1e-12) or av.max() > (1 + 1e-12) / self.nu:
            raise CellError(f"a leaves [{self.nu:g}, {1 / self.nu:g}]: range [{av.min():.4g}, {av.max():.4g}]")

    @property
    def period(self) -> float:
        for f in (self.a, self.beta):
            if not f.is_constant:
                return f.period
        return self.a.period

    @cached_property
    def ratio(self) -> PeriodicFn:
        return self.beta / self.a

    @cached_property
    def _G(self) -> ChebPrimitive:
        return ChebPrimitive(self.ratio.value_at, 0.0, self.period, _panels(self.a, self.beta))

    @property
    def G1(self) -> float:
        return self._G.total

    @cached_property
    def _E(self) -> ChebPrimitive:
        G = self._G
        return ChebPrimitive(lambda s: np.exp(-G(s)), 0.0, self.period, G.panels)

    def split(self, x):
        """Whole periods and remainder: ``x = k * period + s``."""
        x = np.asarray(x, dtype=float)
        k = np.floor(x / self.period)
        return k, x - k * self.period


@dataclass(frozen=True, eq=False)
class CellData:
    """Invariant density and effective averages of a periodic operator."""

    v: PeriodicFn
    c_flux: float
    G_per_period: float
    a0: float
    b0: float
    p0: float | None
    coeffs: DriftCoeffs

    def G(self, x) -> np.ndarray:
        return log_density(self.coeffs, x)


@dataclass(frozen=True, eq=False)
class Corrector:
    """Periodic solution of ``L u = f - f0`` pinned by ``u(0) = 0``."""

    u: PeriodicFn
    f0: float
    lam: float
    coeffs: DriftCoeffs
    rhs: PeriodicFn
    unwrapped: Callable = field(repr=False, default=None)

    def periodicity_gap(self) -> tuple[float, float]:
        """``|u(P) - u(0)|`` and ``|u'(P) - u'(0)|`` from the unwrapped construction."""
        j = self.unwrapped(np.array([0.0, self.coeffs.period]), 1).coeffs
        return float(abs(j[0, 1] - j[0, 0])), float(abs(j[1, 1] - j[1, 0]))


# primitives ---------------------------------------------------------------


def log_density(coeffs: DriftCoeffs, x) -> np.ndarray:
    """``G(x) = int_0^x beta/a``, O(1) in ``|x|``."""
    k, s = coeffs.split(x)
    return k * coeffs.G1 + coeffs._G(s)


def _geometric(k, G1):
    """``sum_{j=0}^{k-1} exp(-j G1)`` for integer ``k`` of either sign."""
    k = np.asarray(k, dtype=float)
    if abs(G1) <= 1e-300:
        return k
    return np.expm1(-k * G1) / np.expm1(-G1)


def fundamental_u0(coeffs: DriftCoeffs, x) -> np.ndarray:
    """``u0(x) = int_0^x exp(-G)``: solves ``L u0 = 0``, ``u0(0) = 0``, ``u0'(0) = 1``.

    May overflow for large ``|x|`` when ``G(period) < 0``; use
    :func:`fundamental_u0_scaled` there.
    """
    k, s = coeffs.split(x)
    E1, G1 = coeffs._E.total, coeffs.G1
    with np.errstate(over="ignore"):
        return E1 * _geometric(k, G1) + np.exp(-k * G1) * coeffs._E(s)


def _log_geometric(k, G1):
    k = np.asarray(k, dtype=float)
    out = np.full(k.shape, -np.inf)
    pos = k > 0
    kk = k[pos]
    if abs(G1) <= 1e-14:
        out[pos] = np.log(kk)
    elif G1 > 0:
        out[pos] = np.log(-np.expm1(-kk * G1)) - np.log(-np.expm1(-G1))
    else:
        out[pos] = -(kk - 1) * G1 + np.log(-np.expm1(kk * G1)) - np.log(-np.expm1(G1))
    return out


def log_fundamental_u0(coeffs: DriftCoeffs, x) -> np.ndarray:
    """``log u0(x)`` for ``x >= 0``, with the exponent factored out per period."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("log_fundamental_u0 needs x >= 0")
    k, s = coeffs.split(x)
    E1, G1 = coeffs._E.total, coeffs.G1
    with np.errstate(divide="ignore"):
        whole = np.log(E1) + _log_geometric(k, G1)
        # E is nondecreasing from E(0) = 0; clamp rounding below zero
        part = -k * G1 + np.log(np.maximum(coeffs._E(s), 0.0))
    return np.logaddexp(whole, part)


def fundamental_u0_scaled(coeffs: DriftCoeffs, x) -> tuple[np.ndarray, float]:
    """Return ``(m, scale)`` with ``u0(x) = m * exp(scale)`` and ``max m = 1``."""
    lg = log_fundamental_u0(coeffs, x)
    scale = float(np.max(lg[np.isfinite(lg)])) if np.any(np.isfinite(lg)) else 0.0
    return np.exp(lg - scale), scale


class _Particular:
    """Running integrals ``H = int exp(G) f/a`` and ``U = int exp(-G) H`` on one period."""

    def __init__(self, coeffs: DriftCoeffs, f: PeriodicFn):
        G = coeffs._G
        P = coeffs.period
        n = max(G.panels, _panels(f))
        fa = f / coeffs.a
        self.H = ChebPrimitive(lambda s: np.exp(G(s)) * fa.value_at(s), 0.0, P, n)
        self.U = ChebPrimitive(lambda s: np.exp(-G(s)) * self.H(s), 0.0, P, n)
        self.coeffs = coeffs

    def H_at(self, x):
        c = self.coeffs
        k, s = c.split(x)
        H1, G1 = self.H.total, c.G1
        return H1 * _geometric(k, -G1) + np.exp(k * G1) * self.H(s)

    def U_at(self, x):
        c = self.coeffs
        x = np.asarray(x, dtype=float)
        k, s = c.split(x)
        G1, E1, H1, U1 = c.G1, c._E.total, self.H.total, self.U.total
        kmin, kmax = int(min(k.min(initial=0), 0)), int(max(k.max(initial=0), 0))
        ks = np.arange(kmin, kmax + 1)
        Hk = H1 * _geometric(ks, -G1)
        steps = np.exp(-ks * G1) * Hk * E1 + U1
        # U(k) for k in [kmin, kmax], anchored at U(0) = 0
        Uk = np.zeros(ks.shape)
        i0 = -kmin
        Uk[i0 + 1 :] = np.cumsum(steps[i0:-1]) if kmax > 0 else Uk[i0 + 1 :]
        if kmin < 0:
            Uk[:i0] = -np.cumsum(steps[:i0][::-1])[::-1]
        idx = (k - kmin).astype(int)
        return Uk[idx] + np.exp(-k * G1) * Hk[idx] * c._E(s) + self.U(s)


def particular_U(coeffs: DriftCoeffs, f: PeriodicFn, x) -> np.ndarray:
    """``U(x) = int_0^x exp(-G(y)) int_0^y exp(G) f/a``: ``L U = f``, ``U(0) = U'(0) = 0``."""
    return _Particular(coeffs, f).U_at(x)


# invariant density ---------------------------------------------------------


def invariant_density(coeffs: DriftCoeffs, p: PeriodicFn | None = None, check: bool = True) -> CellData:
    """Positive periodic ``v`` with ``(a v)'' - (beta v)' = 0`` and unit mass.

    Uses the first integral ``(a v)' - beta v = c_flux``; with ``w = a v``
    this is ``w' - (beta/a) w = c_flux``, solved by the integrating factor.

    Parameters
    ----------
    coeffs : DriftCoeffs
    p : PeriodicFn, optional
        For travelling operators with ``beta = a' - p``; then ``b0 = (beta + p, v)``
        and ``p0 = (p, v)``.

    Raises
    ------
    CellError
        If the density is not strictly positive.
    """
    P = coeffs.period
    G1 = coeffs.G1
    E1 = coeffs._E.total
    if abs(G1) <= DEGENERATE_G1:
        w0 = 1.0 / float(coeffs.a.value_at(0.0))
        c = 0.0
    else:
        w0 = 1.0
        c = w0 * np.expm1(-G1) / E1
    Gp, Ep, a, ratio = coeffs._G, coeffs._E, coeffs.a, coeffs.ratio

    def raw_w(s):
        return np.exp(Gp(s)) * (w0 + c * Ep(s))

    def make_jet(scale):
        def jet_fn(x, n):
            x = np.asarray(x, dtype=float)
            s = x - P * np.floor(x / P)
            w = raw_w(s) * scale
            if n == 0:
                return Jet(w[None] / a.value_at(x)[None])
            one = Jet.constant(1.0, n - 1, x.shape)
            wj = solve_linear_ode_jet(w, one, -ratio.jet(x, n - 1), Jet.constant(c * scale, n - 1, x.shape))
            return wj / a.jet(x, n)

        return jet_fn

    raw = PeriodicFn(make_jet(1.0), P, min(a.smoothness_order, coeffs.beta.smoothness_order), min(a.feature_scale, coeffs.beta.feature_scale), "v")
    Z = quad_period(raw)
    scale = 1.0 / Z
    v = PeriodicFn(make_jet(scale), P, raw.smoothness_order, raw.feature_scale, "v")
    if check:
        x = np.arange(RESIDUAL_POINTS) * (P / RESIDUAL_POINTS)
        vmin = float(np.min(v.value_at(x)))
        if not vmin > 0:
            raise CellError(f"invariant density not positive (min {vmin:g})")
    a0 = quad_period(a * v)
    b = coeffs.beta + p if p is not None else coeffs.beta
    b0 = quad_period(b * v)
    p0 = quad_period(p * v) if p is not None else None
    return CellData(v, c * scale, G1, a0, b0, p0, coeffs)


def weighted_average(f: PeriodicFn, cell: CellData) -> float:
    """``(f, v) = int f v`` over one period."""
    return quad_period(f * cell.v)


# correctors ------------------------------------------------------------------


def solve_cell(coeffs: DriftCoeffs, f: PeriodicFn, cell: CellData | None = None) -> Corrector:
    """Periodic ``u`` with ``L u = f - f0``, ``f0 = (f, v)``, ``u(0) = 0``.

    Built as ``u = U + lam * u0`` where ``U`` is the particular solution for
    ``f - f0`` and ``lam`` makes ``u(period) = 0``.
    """
    if cell is None:
        cell = invariant_density(coeffs)
    f0 = weighted_average(f, cell)
    rhs = f - f0
    part = _Particular(coeffs, rhs)
    P = coeffs.period
    E = coeffs._E
    if not E.total > 0:
        raise CellError("u0(period) vanished")
    lam = -part.U.total / E.total
    Gp, a, beta = coeffs._G, coeffs.a, coeffs.beta

    def raw(s, n):
        s = np.asarray(s, dtype=float)
        val = part.U(s) + lam * E(s)
        if n == 0:
            return Jet(val[None])
        slope = np.exp(-Gp(s)) * (part.H(s) + lam)
        if n == 1:
            return Jet(np.stack([val, slope]))
        y = solve_linear_ode_jet(slope, a.jet(s, n - 2), beta.jet(s, n - 2), rhs.jet(s, n - 2))
        return integrate_jet(val, y)

    def jet_fn(x, n):
        x = np.asarray(x, dtype=float)
        return raw(x - P * np.floor(x / P), n)

    u = PeriodicFn(jet_fn, P, min(a.smoothness_order, beta.smoothness_order, f.smoothness_order), min(a.feature_scale, beta.feature_scale, f.feature_scale), "corrector")
    return Corrector(u, f0, lam, coeffs, rhs, raw)


def check_sign_relation(a: PeriodicFn, b: PeriodicFn, nu: float = 0.5, tol: float = 1e-10) -> tuple[float, float, bool]:
    """Return ``(b0, G1, agree)`` for ``L u = a u'' + b u'``."""
    coeffs = DriftCoeffs(a, b, nu)
    cell = invariant_density(coeffs)
    s1 = 0 if abs(cell.b0) <= tol else int(np.sign(cell.b0))
    s2 = 0 if abs(cell.G_per_period) <= tol else int(np.sign(cell.G_per_period))
    return cell.b0, cell.G_per_period, s1 == s2



def random_pair(rng: np.random.Generator, modes: int = 3) -> tuple[PeriodicFn, PeriodicFn]:
    """Random trigonometric ``(a, b)`` with ``a`` in ``[0.55, 1.95]``.

    ``b`` has a random mean so that ``G(1)`` takes both signs across draws.
    """
    amp = rng.dirichlet(np.ones(modes)) * 0.7 * rng.uniform(0.2, 1.0)
    a = constant(1.25)
    b = constant(float(rng.normal(0.0, 0.3)))
    for k in range(1, modes + 1):
        a = a + trig(k, "cos", float(amp[k - 1]), float(rng.uniform(0, 2 * np.pi)))
        b = b + trig(k, "sin", float(rng.normal(0.0, 1.0)), float(rng.uniform(0, 2 * np.pi)))
    return a, b

# travelling reduction ----------------------------------------------------------


def construct_p_from_v(a: PeriodicFn, eta2: PeriodicFn, nu: float = 0.5) -> PeriodicFn:
    """``p = (1 - a v')/v`` for ``v = 1 + eta2``, so that ``a v' + p v = 1``.

    Raises
    ------
    CellError
        If ``v`` is not positive or ``p`` leaves ``[nu, 1/nu]``.
    """
    v = 1.0 + eta2
    P = v.period if not v.is_constant else a.period
    x = np.arange(10_000) * (P / 10_000)
    if not np.min(v.value_at(x)) > 0:
        raise CellError("v = 1 + eta2 must be positive")
    p = (1.0 - a * v.derivative()) / v
    pv = p.value_at(x)
    if pv.min() < nu * (1 - 1e-12) or pv.max() > (1 + 1e-12) / nu:
        raise CellError(f"p leaves [{nu:g}, {1 / nu:g}]: range [{pv.min():.4g}, {pv.max():.4g}]; shrink delta0")
    res = travelling_adjoint_residual(a, p, v)
    if res > 1e-6:
        raise CellError(f"adjoint identity residual {res:.3g}")
    return p


def travelling_adjoint_residual(a: PeriodicFn, p: PeriodicFn, v: PeriodicFn, n: int = RESIDUAL_POINTS) -> float:
    """Centered-difference residual of ``(p v)' + (a v')' = 0`` through its flux."""
    P = v.period if not v.is_constant else a.period
    h = P / n
    x = np.arange(n) * h
    flux = a.value_at(x) * v.derivative_at(x) + p.value_at(x) * v.value_at(x)
    return float(np.max(np.abs(np.roll(flux, -1) - np.roll(flux, 1)) / (2 * h)))


def travelling_coeffs(a: PeriodicFn, p: PeriodicFn, nu: float = 0.5) -> DriftCoeffs:
    """``beta = a' - p``: the reduced operator ``a u'' + (a' - p) u'``."""
    return DriftCoeffs(a, a.derivative() - p, nu)


def effective_transport(a: PeriodicFn, p: PeriodicFn, nu: float = 0.5) -> tuple[float, float, float]:
    """Return ``(p0, b0, c)`` with ``b = a'`` and ``c = b0 / p0``."""
    cell = invariant_density(travelling_coeffs(a, p, nu), p=p)
    return cell.p0, cell.b0, cell.b0 / cell.p0


# residual diagnostics ------------------------------------------------------------


def _grid(P, n):
    h = P / n
    return np.arange(n) * h, h


def fd_adjoint_residual(cell: CellData, n: int = RESIDUAL_POINTS) -> float:
    """Sup of ``(a v)'' - (beta v)'`` by centered second differences."""
    c = cell.coeffs
    x, h = _grid(c.period, n)
    av = c.a.value_at(x) * cell.v.value_at(x)
    bv = c.beta.value_at(x) * cell.v.value_at(x)
    r = (np.roll(av, -1) - 2 * av + np.roll(av, 1)) / h**2 - (np.roll(bv, -1) - np.roll(bv, 1)) / (2 * h)
    return float(np.max(np.abs(r)))


def fd_operator_residual(coeffs: DriftCoeffs, u: PeriodicFn, rhs: PeriodicFn, n: int = RESIDUAL_POINTS) -> float:
    """Sup of ``a u'' + beta u' - rhs`` by centered second differences."""
    x, h = _grid(coeffs.period, n)
    uv = u.value_at(x)
    d2 = (np.roll(uv, -1) - 2 * uv + np.roll(uv, 1)) / h**2
    d1 = (np.roll(uv, -1) - np.roll(uv, 1)) / (2 * h)
    r = coeffs.a.value_at(x) * d2 + coeffs.beta.value_at(x) * d1 - rhs.value_at(x)
    return float(np.max(np.abs(r)))


def flux_adjoint_residual(cell: CellData, n: int = RESIDUAL_POINTS) -> float:
    """Sup of ``(a v)' - beta v - c_flux`` with exact derivatives."""
    c = cell.coeffs
    x, _ = _grid(c.period, n)
    v = cell.v.jet(x, 1).derivatives()
    a = c.a.jet(x, 1).derivatives()
    flux = a[1] * v[0] + a[0] * v[1] - c.beta.value_at(x) * v[0]
    return float(np.max(np.abs(flux - cell.c_flux)))


def exact_operator_residual(coeffs: DriftCoeffs, u: PeriodicFn, rhs: PeriodicFn, n: int = RESIDUAL_POINTS) -> float:
    """Sup of ``a u'' + beta u' - rhs`` with exact derivatives."""
    x, _ = _grid(coeffs.period, n)
    d = u.jet(x, 2).derivatives()
    r = coeffs.a.value_at(x) * d[2] + coeffs.beta.value_at(x) * d[1] - rhs.value_at(x)
    return float(np.max(np.abs(r)))


# coefficient families ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MixedFamily:
    """``a1 = 1 + eta1``, ``a2 = 1 - eta1 + eta2``: ``a = 2 + eta2``, ``b = eta1'``."""

    a1: PeriodicFn
    a2: PeriodicFn

    @property
    def a(self) -> PeriodicFn:
        return self.a1 + self.a2

    @property
    def b(self) -> PeriodicFn:
        return self.a1.derivative()


@dataclass(frozen=True, eq=False)
class TravellingFamily:
    """``a = 1 + eta1``, ``v = 1 + eta2``, ``p = (1 - a v')/v``."""

    a: PeriodicFn
    p: PeriodicFn
    v: PeriodicFn


def mixed_family(delta0: float = 0.25) -> MixedFamily:
    from .periodic_fn import ELLIPTIC, make_eta_pair

    pair = make_eta_pair(delta0, ELLIPTIC)
    return MixedFamily(1.0 + pair.eta1, 1.0 - pair.eta1 + pair.eta2)


def travelling_family(delta0: float = 0.25, nu: float = 0.5) -> TravellingFamily:
    from .periodic_fn import PARABOLIC, make_eta_pair

    pair = make_eta_pair(delta0, PARABOLIC)
    a = 1.0 + pair.eta1
    p = construct_p_from_v(a, pair.eta2, nu)
    return TravellingFamily(a, p, 1.0 + pair.eta2)


__all__ = [
    "CellData",
    "CellError",
    "Corrector",
    "DriftCoeffs",
    "MixedFamily",
    "TravellingFamily",
    "check_sign_relation",
    "constant",
    "construct_p_from_v",
    "effective_transport",
    "fd_adjoint_residual",
    "exact_operator_residual",
    "fd_operator_residual",
    "flux_adjoint_residual",
    "fundamental_u0",
    "fundamental_u0_scaled",
    "invariant_density",
    "log_density",
    "log_fundamental_u0",
    "mixed_family",
    "particular_U",
    "random_pair",
    "solve_cell",
    "travelling_adjoint_residual",
    "travelling_coeffs",
    "travelling_family",
    "weighted_average",
]
