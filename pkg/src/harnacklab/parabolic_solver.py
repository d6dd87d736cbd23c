"""Flux-form finite differences for ``-p u_t + (a u_x)_x = f`` in one space dimension."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .elliptic_cell import invariant_density, solve_cell, travelling_coeffs
from .jets import Jet
from .periodic_fn import PeriodicFn, _profile_jet, rescale_fast

EXPLICIT = "explicit"
MIDPOINT = "implicit-midpoint"


class SolverError(RuntimeError):
    """Stability, resource or configuration failure."""


class BoundaryInfluenceWarning(UserWarning):
    """The solution reached the truncated ends of the domain."""


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform grid: ``nx`` cells on ``[x_lo, x_hi]``, ``nt`` steps on ``[0, t_end]``."""

    x_lo: float
    x_hi: float
    nx: int
    t_end: float
    nt: int

    def __post_init__(self):
        if self.nx < 16 or self.nt < 1:
            raise ValueError("need nx >= 16 and nt >= 1")
        if not (self.x_hi > self.x_lo and self.t_end > 0):
            raise ValueError("empty grid")

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / self.nx

    @property
    def dt(self) -> float:
        return self.t_end / self.nt

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.nx + 1)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.nt + 1)


@dataclass(frozen=True)
class CoefficientField:
    """``p(t, x)``, ``a(t, x)``, ``f(t, x)`` with bounds ``nu <= p, a <= 1/nu``."""

    p_at: Callable
    a_at: Callable
    f_at: Callable | None = None
    nu: float = 0.5

    def check_bounds(self, grid: SpaceTimeGrid, samples: int = 64) -> None:
        ts = np.linspace(0.0, grid.t_end, min(samples, grid.nt + 1))
        x = grid.x
        xm = 0.5 * (x[1:] + x[:-1])
        for t in ts:
            for name, fn, pts in (("p", self.p_at, x), ("a", self.a_at, xm)):
                vals = fn(t, pts)
                if np.min(vals) < self.nu * (1 - 1e-12) or np.max(vals) > (1 + 1e-12) / self.nu:
                    raise SolverError(f"{name} leaves [{self.nu:g}, {1 / self.nu:g}] at t = {t:g}")


@dataclass(frozen=True, eq=False)
class Field:
    """Solution rows ``values[k]`` at times ``t[k]`` on the nodes ``grid.x``."""

    grid: SpaceTimeGrid
    t: np.ndarray
    values: np.ndarray
    nu: float = 0.5
    boundary_kind: str = "zero"
    meta: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def row_at(self, t: float) -> np.ndarray:
        return self.values[int(np.argmin(np.abs(self.t - t)))]


# compactly supported profiles -------------------------------------------------


@dataclass(frozen=True, eq=False)
class Profile:
    """A smooth initial profile with known support and derivatives."""

    jet_fn: Callable[[np.ndarray, int], Jet]
    support: tuple[float, float]
    log_fn: Callable | None = None

    def __call__(self, x) -> np.ndarray:
        return self.jet_fn(np.asarray(x, dtype=float), 0).coeffs[0]

    def derivative(self, x, k: int = 1) -> np.ndarray:
        return self.jet_fn(np.asarray(x, dtype=float), k).derivative(k)

    def log(self, x) -> np.ndarray:
        """``log g`` without underflow (``-inf`` off the support)."""
        if self.log_fn is not None:
            return self.log_fn(np.asarray(x, dtype=float))
        with np.errstate(divide="ignore"):
            return np.log(self(x))


def bump_profile(center: float = 0.0, halfwidth: float = 0.2, height: float = 1.0) -> Profile:
    """``height * exp(1 - 1/(1 - s^2))`` with ``s = (x - center)/halfwidth``; equals ``height`` at ``center``."""

    def jet_fn(x, n):
        return _profile_jet(Jet.variable(x - center, n, 1.0 / halfwidth)) * height

    def log_fn(x):
        s = (x - center) / halfwidth
        out = np.full(s.shape, -np.inf)
        m = np.abs(s) < 1
        out[m] = np.log(height) + 1.0 - 1.0 / (1.0 - s[m] ** 2)
        return out

    return Profile(jet_fn, (center - halfwidth, center + halfwidth), log_fn)


# solver --------------------------------------------------------------------------


def _operator_bands(a_half: np.ndarray, h: float):
    """Tridiagonal ``(lower, diag, upper)`` of ``u -> (a u_x)_x`` on interior nodes."""
    lo = a_half[:-1] / h**2
    up = a_half[1:] / h**2
    return lo, -(lo + up), up


def _apply(lo, di, up, u):
    out = di * u
    out[1:] += lo[1:] * u[:-1]
    out[:-1] += up[:-1] * u[1:]
    return out


def solve_cauchy(
    coeffs: CoefficientField,
    g: Callable,
    grid: SpaceTimeGrid,
    scheme: str = MIDPOINT,
    store_every: int = 1,
    check: bool = True,
    warn_boundary: bool = True,
) -> Field:
    """March ``p u_t = (a u_x)_x - f`` with zero values at both ends.

    Parameters
    ----------
    coeffs : CoefficientField
    g : callable
        Initial profile.
    grid : SpaceTimeGrid
    scheme : {"implicit-midpoint", "explicit"}
        Time discretization; coefficients are taken at the step midpoint
        (implicit) or at the old time (explicit).
    store_every : int
        Keep every ``store_every``-th time row (the last row is always kept).
    warn_boundary : bool
        Warn when the solution is not negligible next to the ends.

    Raises
    ------
    SolverError
        If the explicit stability bound is violated.
    """
    if scheme not in (EXPLICIT, MIDPOINT):
        raise ValueError(f"unknown scheme {scheme!r}")
    x, h, dt = grid.x, grid.h, grid.dt
    xi = x[1:-1]
    xm = 0.5 * (x[1:] + x[:-1])
    if check:
        coeffs.check_bounds(grid)
    if scheme == EXPLICIT:
        pmin = np.min(coeffs.p_at(0.0, xi))
        amax = np.max(coeffs.a_at(0.0, xm))
        if dt > pmin * h**2 / (2 * amax) * (1 + 1e-12):
            raise SolverError(f"explicit step dt = {dt:.3g} exceeds p h^2/(2a) = {pmin * h**2 / (2 * amax):.3g}")
    u = np.asarray(g(x), dtype=float).copy()
    u[0] = u[-1] = 0.0
    rows, times = [u.copy()], [0.0]
    f_at = coeffs.f_at
    ab = np.zeros((3, xi.size))
    for n in range(grid.nt):
        t0 = n * dt
        tc = t0 + (0.5 * dt if scheme == MIDPOINT else 0.0)
        lo, di, up = _operator_bands(coeffs.a_at(tc, xm), h)
        p = coeffs.p_at(tc, xi)
        f = f_at(tc, xi) if f_at is not None else 0.0
        ui = u[1:-1]
        if scheme == EXPLICIT:
            ui = ui + dt * (_apply(lo, di, up, ui) - f) / p
        else:
            rhs = p * ui + 0.5 * dt * _apply(lo, di, up, ui) - dt * f
            ab[0, 1:] = -0.5 * dt * up[:-1]
            ab[1] = p - 0.5 * dt * di
            ab[2, :-1] = -0.5 * dt * lo[1:]
            ui = solve_banded((1, 1), ab, rhs, check_finite=False)
        u = np.concatenate([[0.0], ui, [0.0]])
        if (n + 1) % store_every == 0 or n + 1 == grid.nt:
            rows.append(u)
            times.append(t0 + dt)
    values = np.array(rows)
    peak = np.max(np.abs(values))
    edge = max(np.max(np.abs(values[:, :3])), np.max(np.abs(values[:, -3:])))
    if warn_boundary and peak > 0 and edge > 1e-6 * peak:
        warnings.warn(f"boundary influence {edge / peak:.2e} of the peak; enlarge the domain", BoundaryInfluenceWarning, stacklevel=2)
    return Field(grid, np.array(times), values, coeffs.nu, "zero", {"scheme": scheme, "dt_over_h2": dt / h**2})


def travelling_coefficients(a: PeriodicFn, p: PeriodicFn, eps: float, nu: float = 0.5, f: Callable | None = None) -> CoefficientField:
    """``p(t/eps^2 + x/eps)`` and ``a(t/eps^2 + x/eps)`` as a coefficient field."""
    return CoefficientField(rescale_fast(p, eps).two_scale, rescale_fast(a, eps).two_scale, f, nu)


@dataclass(frozen=True)
class GridPolicy:
    """Resolution and resource limits for the two-scale solve."""

    cells_per_eps: int = 16
    steps_per_eps2: int = 16
    max_nx: int = 200_000
    max_nt: int = 2_000_000
    max_work: float = 5e9


def two_scale_grid(g: Profile, eps: float, t_end: float, c: float, a_max: float, p_min: float, policy: GridPolicy = GridPolicy()) -> SpaceTimeGrid:
    """Support of ``g`` widened by transport reach and six diffusion lengths."""
    reach = abs(c) / eps * t_end + 6 * np.sqrt(t_end * a_max / p_min)
    lo, hi = g.support[0] - reach, g.support[1] + reach
    nx = int(np.ceil((hi - lo) * policy.cells_per_eps / eps))
    nt = int(np.ceil(t_end * policy.steps_per_eps2 / eps**2))
    if nx > policy.max_nx or nt > policy.max_nt or float(nx) * nt > policy.max_work:
        raise SolverError(f"eps = {eps:g} needs nx = {nx}, nt = {nt}: beyond the configured caps")
    return SpaceTimeGrid(lo, hi, max(nx, 16), t_end, nt)


def solve_two_scale_cauchy(
    a: PeriodicFn,
    p: PeriodicFn,
    eps: float,
    g: Profile,
    t_end: float,
    nu: float = 0.5,
    policy: GridPolicy = GridPolicy(),
    store_every: int | None = None,
    c: float | None = None,
    refine: int = 1,
) -> Field:
    """``-p(y) u_t + (a(y) u_x)_x = 0`` with ``y = t/eps^2 + x/eps`` and ``u(0, .) = g``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if c is None:
        c = 0.0
    xs = np.linspace(0, p.period, 2049)
    grid = two_scale_grid(g, eps, t_end, c, float(np.max(a.value_at(xs))), float(np.min(p.value_at(xs))), policy)
    if refine > 1:
        grid = SpaceTimeGrid(grid.x_lo, grid.x_hi, grid.nx * refine, grid.t_end, grid.nt * refine)
    if store_every is None:
        store_every = max(1, grid.nt // 200)
    field_ = solve_cauchy(travelling_coefficients(a, p, eps, nu), g, grid, MIDPOINT, store_every)
    field_.meta.update(eps=eps, c=c)
    return field_


def transport_reference(g: Callable, c: float, eps: float, t, x) -> np.ndarray:
    """``U(t, x) = g(c t / eps + x)``."""
    return g(c * np.asarray(t, dtype=float) / eps + np.asarray(x, dtype=float))


@dataclass(frozen=True)
class CorrectorReport:
    """Comparison of the two-scale solution with transport and its corrected form."""

    eps: float
    c: float
    p0: float
    b0: float
    fitted_N: float
    max_corrector_gap: float
    max_Lw: float
    max_u_minus_U: float
    max_Lw_fd: float = float("nan")


def corrector_comparison(a: PeriodicFn, p: PeriodicFn, eps: float, g: Profile, t_end: float, nu: float = 0.5, policy: GridPolicy = GridPolicy()) -> CorrectorReport:
    """Solve, then compare with ``U = g(c t/eps + x)`` and ``w = u - U - eps^2 (P U_t - B U_x / eps)``."""
    coeffs = travelling_coeffs(a, p, nu)
    cell = invariant_density(coeffs, p=p)
    c = cell.b0 / cell.p0
    P = solve_cell(coeffs, p, cell).u
    B = solve_cell(coeffs, a.derivative(), cell).u
    fld = solve_two_scale_cauchy(a, p, eps, g, t_end, nu, policy, store_every=1, c=c)
    T, X = np.meshgrid(fld.t, fld.x, indexing="ij")
    U = transport_reference(g, c, eps, T, X)
    gp = g.derivative(c * T / eps + X)
    Ut, Ux = c / eps * gp, gp
    Pe = rescale_fast(P, eps).two_scale(T, X)
    Be = rescale_fast(B, eps).two_scale(T, X)
    corr = eps**2 * (Pe * Ut - Be * Ux / eps)
    diff = fld.values - U
    # with L P = p - p0 and L B = b - b0 the eps^-1 terms cancel in L(U + corr)
    w = diff - corr
    fitted = float(np.max(np.abs(diff) / (eps + T)))
    # L^e w = -L^e(U + corr) with U + corr = g(z) + eps Q(y) g'(z), Q = c P - B
    Q = c * P - B
    Y = T / eps**2 + X / eps
    Qd = Q.jet(Y, 2).derivatives()
    gd = g.jet_fn(c * T / eps + X, 3).derivatives()
    phi_t = (c / eps) * gd[1] + Qd[1] * gd[1] / eps + c * Qd[0] * gd[2]
    phi_x = gd[1] + Qd[1] * gd[1] + eps * Qd[0] * gd[2]
    phi_xx = gd[2] + Qd[2] * gd[1] / eps + 2 * Qd[1] * gd[2] + eps * Qd[0] * gd[3]
    ay = a.jet(Y, 1).derivatives()
    Lw = -p.value_at(Y) * phi_t + ay[1] * phi_x / eps + ay[0] * phi_xx
    # the discrete operator on w, coefficients at step midpoints
    dt, h = fld.grid.dt, fld.grid.h
    tm = 0.5 * (fld.t[1:] + fld.t[:-1])
    xm = 0.5 * (fld.x[1:] + fld.x[:-1])
    Tm, Xi = np.meshgrid(tm, fld.x[1:-1], indexing="ij")
    pe = rescale_fast(p, eps).two_scale(Tm, Xi)
    Tmm, Xm = np.meshgrid(tm, xm, indexing="ij")
    ae = rescale_fast(a, eps).two_scale(Tmm, Xm)
    wm = 0.5 * (w[1:] + w[:-1])
    flux = ae * np.diff(wm, axis=1) / h
    Lw_fd = -pe * np.diff(w, axis=0)[:, 1:-1] / dt + np.diff(flux, axis=1) / h
    return CorrectorReport(eps, c, cell.p0, cell.b0, fitted, float(np.max(np.abs(corr))), float(np.max(np.abs(Lw))), float(np.max(np.abs(diff))), float(np.max(np.abs(Lw_fd))))
