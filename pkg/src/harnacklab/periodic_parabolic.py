"""Time-periodic solutions of ``-p u_t + a u_xx + b u_x = f`` by marching over periods.

The Cauchy problem with zero data is advanced one time period at a time; the
differences ``w_k = u((k+1) l0) - u(k l0)`` contract geometrically when the
forcing is orthogonal to a positive adjoint solution ``v``, and the last
period is returned as the periodic solution.  Space is periodic with a
central-difference stencil; time uses implicit midpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import fft as sfft
from scipy import sparse
from scipy.sparse.linalg import splu

from .parabolic_solver import Field, SpaceTimeGrid
from .periodic_fn import PeriodicFn

PERIODICITY_TOL = 1e-10
ADJOINT_TOL = 1e-5


class OrthogonalityError(ValueError):
    """The forcing is not orthogonal to the adjoint density."""


class ContractionError(RuntimeError):
    """The period-to-period differences failed to contract."""


class InsufficientDataError(ValueError):
    """Too few recorded ratios to estimate a contraction factor."""


@dataclass(frozen=True)
class PeriodicBox:
    """``K = [0, l0] x [0, l]``: time period ``l0``, space period ``l``."""

    l: float = 4.0
    l0: float = 1.0

    def __post_init__(self):
        if not (self.l > 0 and self.l0 > 0):
            raise ValueError("periods must be positive")

    def nodes(self, nt: int, nx: int) -> tuple[np.ndarray, np.ndarray]:
        """Uniform periodic nodes (right endpoints excluded)."""
        return np.arange(nt) * (self.l0 / nt), np.arange(nx) * (self.l / nx)


def _zero(t, x):
    return np.zeros(np.broadcast(np.asarray(t), np.asarray(x)).shape)


@dataclass(frozen=True, eq=False)
class PeriodicCoefficients2D:
    """``p, a, b, f, v`` as maps ``(t, x) -> array``, each ``K``-periodic.

    ``v`` is a positive solution of ``(p v)_t + (a v)_xx - (b v)_x = 0``.
    """

    p: Callable
    a: Callable
    b: Callable = _zero
    f: Callable = _zero
    v: Callable | None = None
    nu: float = 0.5

    def with_forcing(self, f: Callable) -> "PeriodicCoefficients2D":
        return PeriodicCoefficients2D(self.p, self.a, self.b, f, self.v, self.nu)

    def check(self, box: PeriodicBox, nt: int = 64, nx: int = 256) -> None:
        """Periodicity, ellipticity bounds and positivity of ``v`` on a sample grid.

        Raises
        ------
        ValueError
            On the first violated condition.
        """
        t, x = box.nodes(nt, nx)
        T, X = np.meshgrid(t, x, indexing="ij")
        for name in ("p", "a", "b", "f", "v"):
            fn = getattr(self, name)
            if fn is None:
                continue
            base = fn(T, X)
            scale = 1.0 + np.max(np.abs(base))
            for shifted in (fn(T + box.l0, X), fn(T, X + box.l)):
                if np.max(np.abs(shifted - base)) > PERIODICITY_TOL * scale:
                    raise ValueError(f"{name} is not K-periodic")
        for name in ("p", "a"):
            vals = getattr(self, name)(T, X)
            if np.min(vals) < self.nu * (1 - 1e-12) or np.max(vals) > (1 + 1e-12) / self.nu:
                raise ValueError(f"{name} leaves [{self.nu:g}, {1 / self.nu:g}]")
        if self.v is not None and not np.min(self.v(T, X)) > 0:
            raise ValueError("v must be strictly positive")

    def adjoint_residual(self, box: PeriodicBox, samples: int = 64, fine: int = 1 << 14) -> float:
        """``sup |(p v)_t + (a v)_xx - (b v)_x|`` over a ``samples x samples`` grid.

        Each derivative is spectral along lines holding ``fine`` nodes in its
        own axis, so narrow features are resolved without a fine 2D grid.
        """
        if self.v is None:
            raise ValueError("no adjoint density supplied")
        fine = samples * int(np.ceil(fine / samples))
        stride = fine // samples
        tc, xc = box.nodes(samples, samples)
        tf, xf = box.nodes(fine, fine)
        T, X = np.meshgrid(tf, xc, indexing="ij")
        dt_term = _spectral_diff(self.p(T, X) * self.v(T, X), box.l0, 0, 1)[::stride]
        T, X = np.meshgrid(tc, xf, indexing="ij")
        v = self.v(T, X)
        dx_term = _spectral_diff(self.a(T, X) * v, box.l, 1, 2) - _spectral_diff(self.b(T, X) * v, box.l, 1, 1)
        return float(np.max(np.abs(dt_term + dx_term[:, ::stride])))


def _spectral_diff(vals: np.ndarray, period: float, axis: int, order: int) -> np.ndarray:
    n = vals.shape[axis]
    k = 2j * np.pi * sfft.fftfreq(n, period / n)
    if order % 2 and n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * vals.ndim
    shape[axis] = n
    return sfft.ifft(sfft.fft(vals, axis=axis) * (k**order).reshape(shape), axis=axis).real


def travelling_periodic_coefficients(a: PeriodicFn, p: PeriodicFn, v: PeriodicFn, f: Callable = _zero, nu: float = 0.5) -> PeriodicCoefficients2D:
    """Coefficients ``p(t + x)``, ``a(t + x)`` in divergence form (``b = a_x``) with ``v(t + x)``.

    The adjoint reduces to ``(p v)' + (a v')' = 0`` along ``y = t + x``.
    """
    da = a.derivative()
    return PeriodicCoefficients2D(
        p=lambda t, x: p(np.asarray(t) + x),
        a=lambda t, x: a(np.asarray(t) + x),
        b=lambda t, x: da(np.asarray(t) + x),
        f=f,
        v=lambda t, x: v(np.asarray(t) + x),
        nu=nu,
    )


def check_orthogonality(f: Callable, v: Callable, box: PeriodicBox, nt: int = 128, nx: int = 8192) -> float:
    """``(f, v)``: the double integral over ``K`` by the periodic trapezoid rule."""
    t, x = box.nodes(nt, nx)
    T, X = np.meshgrid(t, x, indexing="ij")
    return float(np.sum(f(T, X) * v(T, X)) * (box.l0 / nt) * (box.l / nx))


@dataclass(frozen=True)
class IterationTrace:
    """``c_k = osc w_k(0, .)`` per period and the derived contraction estimate."""

    c_list: tuple[float, ...]
    theta_hat: float
    iterations: int
    converged: bool
    tol: float
    drift: tuple[float, ...] = ()


def _ratios(c: np.ndarray, tol: float) -> np.ndarray:
    keep = c[:-1] >= 10 * tol
    return c[1:][keep] / c[:-1][keep]


def estimate_contraction(trace: IterationTrace) -> float:
    """Largest ``c_{k+1}/c_k`` over steps with ``c_k >= 10 tol``.

    Raises
    ------
    InsufficientDataError
        With fewer than 3 usable ratios (an all-zero trace returns 0).
    """
    c = np.asarray(trace.c_list, dtype=float)
    if np.all(c == 0):
        return 0.0
    r = _ratios(c, trace.tol)
    if r.size < 3:
        raise InsufficientDataError(f"need 3 ratios, have {r.size}")
    return float(np.max(r))


@dataclass(frozen=True, eq=False)
class _Stepper:
    """Implicit-midpoint steps over one time period with cached factorizations."""

    lhs: list
    rhs: list
    force: np.ndarray

    @classmethod
    def build(cls, coeffs: PeriodicCoefficients2D, box: PeriodicBox, nx: int, nt: int) -> "_Stepper":
        _, x = box.nodes(1, nx)
        h, dt = box.l / nx, box.l0 / nt
        lhs, rhs = [], []
        force = np.empty((nt, nx))
        for n in range(nt):
            tm = np.full(nx, (n + 0.5) * dt)
            A = _operator(coeffs.a(tm, x), coeffs.b(tm, x), h)
            P = sparse.diags(coeffs.p(tm, x) / dt)
            lhs.append(splu((P - 0.5 * A).tocsc()))
            rhs.append((P + 0.5 * A).tocsr())
            force[n] = coeffs.f(tm, x)
        return cls(lhs, rhs, force)

    def period(self, u: np.ndarray, store: np.ndarray | None = None) -> np.ndarray:
        for n, (lu, R) in enumerate(zip(self.lhs, self.rhs)):
            u = lu.solve(R @ u - self.force[n])
            if store is not None:
                store[n + 1] = u
        return u


def _operator(a: np.ndarray, b: np.ndarray, h: float) -> sparse.csr_matrix:
    """Periodic ``a D2 + b D1`` with central differences."""
    n = a.size
    lo = a / h**2 - b / (2 * h)
    up = a / h**2 + b / (2 * h)
    i = np.arange(n)
    rows = np.concatenate([i, i, i])
    cols = np.concatenate([i, (i - 1) % n, (i + 1) % n])
    vals = np.concatenate([-2 * a / h**2, lo, up])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def find_periodic_solution(
    coeffs: PeriodicCoefficients2D,
    box: PeriodicBox = PeriodicBox(),
    tol: float = 1e-6,
    max_periods: int = 200,
    nx: int = 1024,
    steps_per_period: int = 512,
    orthogonality_tol: float = 1e-6,
) -> tuple[Field, IterationTrace]:
    """March ``u0`` from zero data one period at a time until ``osc w_k(0, .) <= tol``.

    Returns the last period ``[k l0, (k+1) l0]`` shifted to ``[0, l0]`` and the trace.

    Raises
    ------
    OrthogonalityError
        If ``|(f, v)| > orthogonality_tol`` or no ``v`` is supplied.
    ContractionError
        If ``c_{k+1} > c_k`` for three consecutive ``k``.
    """
    if coeffs.v is None:
        raise OrthogonalityError("a positive adjoint density v is required")
    fv = check_orthogonality(coeffs.f, coeffs.v, box)
    if abs(fv) > orthogonality_tol:
        raise OrthogonalityError(f"(f, v) = {fv:.3e} exceeds {orthogonality_tol:g}")
    h = box.l / nx
    _, x = box.nodes(1, nx)
    b_max = np.max(np.abs(coeffs.b(np.zeros_like(x), x)))
    if h * b_max > 2 * coeffs.nu:
        raise ValueError("grid too coarse for the drift: need h |b| <= 2 a")
    stepper = _Stepper.build(coeffs, box, nx, steps_per_period)
    rows = np.zeros((steps_per_period + 1, nx))
    u = np.zeros(nx)
    c_list, drift = [], []
    rises = 0
    converged = False
    k = 0
    while True:
        rows[0] = u
        u_next = stepper.period(u, rows)
        w = u_next - u
        c_list.append(float(np.max(w) - np.min(w)))
        drift.append(float(np.mean(w)))
        if len(c_list) > 1 and c_list[-1] > c_list[-2]:
            rises += 1
            if rises >= 3:
                raise ContractionError(f"c_k rose three times in a row at k = {k}: {c_list[-4:]}")
        else:
            rises = 0
        if c_list[-1] <= tol:
            converged = True
            break
        if k >= max_periods:
            break
        u = u_next
        k += 1
    c = np.asarray(c_list)
    r = _ratios(c, tol)
    theta = 0.0 if np.all(c == 0) else (float(np.max(r)) if r.size else float("nan"))
    trace = IterationTrace(tuple(c_list), theta, k, converged, tol, tuple(drift))
    grid = SpaceTimeGrid(0.0, box.l, nx, box.l0, steps_per_period)
    values = np.concatenate([rows, rows[:, :1]], axis=1)
    meta = {
        "periodicity_residual": float(np.max(np.abs(values[-1] - values[0]))),
        "drift_per_period": drift[-1],
        "orthogonality": fv,
    }
    return Field(grid, grid.t, values, coeffs.nu, "periodic", meta), trace


def discrete_residual(fld: Field, coeffs: PeriodicCoefficients2D) -> float:
    """``sup`` of the implicit-midpoint residual of ``Lu = f`` over the rows of ``fld``."""
    u = fld.values[:, :-1]
    x = fld.x[:-1]
    h, dt = fld.grid.h, fld.grid.dt
    worst = 0.0
    for n in range(u.shape[0] - 1):
        tm = np.full(x.size, 0.5 * (fld.t[n] + fld.t[n + 1]))
        A = _operator(coeffs.a(tm, x), coeffs.b(tm, x), h)
        res = -coeffs.p(tm, x) * (u[n + 1] - u[n]) / dt + A @ (0.5 * (u[n + 1] + u[n])) - coeffs.f(tm, x)
        worst = max(worst, float(np.max(np.abs(res))))
    return worst


@dataclass(frozen=True)
class ConservationReport:
    """``I(t) = int p u v dx`` against ``I' = -int f v dx``."""

    t: np.ndarray = field(repr=False)
    I: np.ndarray = field(repr=False)
    max_mismatch: float
    period_forcing_integral: float


def conservation_probe(fld: Field, coeffs: PeriodicCoefficients2D, box: PeriodicBox) -> ConservationReport:
    """Compare the centered difference of ``I(t)`` with ``-int f v dx`` row by row.

    ``period_forcing_integral`` is the periodic trapezoid value of
    ``int int f v`` over the rows of one full period (0 for periodic ``u``, ``v``).
    """
    if coeffs.v is None:
        raise ValueError("no adjoint density supplied")
    x = fld.x[:-1]
    h = box.l / x.size
    T, X = np.meshgrid(fld.t, x, indexing="ij")
    v = coeffs.v(T, X)
    I = np.sum(coeffs.p(T, X) * fld.values[:, :-1] * v, axis=1) * h
    Ffv = np.sum(coeffs.f(T, X) * v, axis=1) * h
    dt = np.diff(fld.t)
    dI = (I[2:] - I[:-2]) / (dt[1:] + dt[:-1])
    mismatch = float(np.max(np.abs(dI + Ffv[1:-1])))
    span = fld.t[-1] - fld.t[0]
    full = np.isclose(span, box.l0, rtol=1e-12)
    total = float(np.sum(Ffv[:-1]) * dt[0]) if full else float("nan")
    return ConservationReport(fld.t, I, mismatch, total)
