"""Exact solutions of the fast-oscillating Dirichlet problems and the barrier check.

The scaled problem ``a(x/eps) u'' + eps^-1 b(x/eps) u' = 0`` on ``(0, 1)`` with
``u(0) = 0``, ``u(1) = 1`` has the closed form ``u(x) = J(x/eps) / J(1/eps)``
where ``J(y) = int_0^y exp(-G)`` and ``G' = b/a``.  ``J`` is evaluated in the
log domain so that ``eps -> 0`` never overflows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .elliptic_cell import DriftCoeffs, invariant_density, log_fundamental_u0, solve_cell
from .periodic_fn import PeriodicFn

#: Ellipticity bound used for ``a = a1 + a2`` (which may exceed 2).
MIXED_NU = 0.4
POINTS_PER_PERIOD = 32


@dataclass(frozen=True, eq=False)
class DirichletSolution:
    """Samples and an evaluator of a Dirichlet solution."""

    eps: float
    domain: tuple[float, float]
    boundary_values: tuple[float, float]
    x: np.ndarray
    u: np.ndarray
    evaluator: Callable = field(repr=False)
    log_scale: float = 0.0

    def __call__(self, x) -> np.ndarray:
        return self.evaluator(x)

    def sup_error(self, target: float, lo: float, hi: float) -> float:
        """``sup |u - target|`` over the samples in ``[lo, hi]``."""
        m = (self.x >= lo) & (self.x <= hi)
        return float(np.max(np.abs(self.u[m] - target)))


def _grid(lo: float, hi: float, eps: float, per_period: int, probes=()) -> np.ndarray:
    n = max(int(np.ceil((hi - lo) * per_period / eps)), 64)
    x = np.linspace(lo, hi, n + 1)
    return np.unique(np.concatenate([x, np.asarray(probes, dtype=float)]))


def _closed_form(coeffs: DriftCoeffs, eps: float):
    log_total = float(log_fundamental_u0(coeffs, np.array(1.0 / eps)))

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        y = np.clip(x, 0.0, 1.0) / eps
        with np.errstate(divide="ignore"):
            return np.exp(log_fundamental_u0(coeffs, y) - log_total)

    return evaluate, log_total


def solve_scaled_dirichlet(a: PeriodicFn, b: PeriodicFn, eps: float, nu: float = MIXED_NU, per_period: int = POINTS_PER_PERIOD, probes=(0.1, 0.5)) -> DirichletSolution:
    """``u(x) = J(x/eps)/J(1/eps)``: the solution with ``u(0) = 0``, ``u(1) = 1``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    coeffs = DriftCoeffs(a, b, nu)
    evaluate, log_total = _closed_form(coeffs, eps)
    x = _grid(0.0, 1.0, eps, per_period, probes)
    return DirichletSolution(eps, (0.0, 1.0), (0.0, 1.0), x, evaluate(x), evaluate, log_total)


def reversed_drift_limit(a: PeriodicFn, b: PeriodicFn, eps: float, nu: float = MIXED_NU, per_period: int = POINTS_PER_PERIOD) -> DirichletSolution:
    """Same closed form for a drift with ``G(1) < 0``, whose limit is 0 away from ``x = 1``."""
    coeffs = DriftCoeffs(a, b, nu)
    if not coeffs.G1 < 0:
        raise ValueError(f"reversed drift needs G(1) < 0, got {coeffs.G1:g}")
    return solve_scaled_dirichlet(a, b, eps, nu, per_period)


def _flat_or_even(f: PeriodicFn, halfwidth: float = 0.01, n: int = 201, tol: float = 1e-12) -> bool:
    x = np.linspace(0.0, halfwidth, n)
    even = np.max(np.abs(f.value_at(x) - f.value_at(-x))) <= tol * (1 + np.max(np.abs(f.value_at(x))))
    flat = np.max(np.abs(f.derivative_at(np.concatenate([x, -x])))) <= tol
    return bool(even or flat)


def solve_mixed_dirichlet(a1: PeriodicFn, a2: PeriodicFn, eps: float, nu: float = MIXED_NU, per_period: int = POINTS_PER_PERIOD) -> DirichletSolution:
    """``(a1^e u')' + a2^e u'' = 0`` on ``(-1, 1)``, ``u(+-1) = +-1``.

    The coefficients act as ``a_j(|x|/eps)``, which requires each ``a_j`` to
    be even or locally constant near 0; the solution is then odd, so it is
    computed on ``[0, 1]`` with ``a = a1 + a2``, ``b = a1'`` and mirrored.

    Raises
    ------
    ValueError
        If ``a1`` or ``a2`` is neither even nor flat near 0.
    """
    for name, f in (("a1", a1), ("a2", a2)):
        if not _flat_or_even(f):
            raise ValueError(f"{name} is neither even nor flat near 0; the odd reduction does not apply")
    half = solve_scaled_dirichlet(a1 + a2, a1.derivative(), eps, nu, per_period, probes=(0.1, 0.5))

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        return np.sign(x) * half.evaluator(np.abs(x))

    xp = half.x
    x = np.concatenate([-xp[:0:-1], xp])
    return DirichletSolution(eps, (-1.0, 1.0), (-1.0, 1.0), x, evaluate(x), evaluate, half.log_scale)


def fd_dirichlet(a: PeriodicFn, b: PeriodicFn, eps: float, h: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference solve of ``a^e u'' + eps^-1 b^e u' = 0``, ``u(0) = 0``, ``u(1) = 1``."""
    if h is None:
        h = eps / 64
    n = int(np.ceil(1.0 / h))
    x = np.linspace(0.0, 1.0, n + 1)
    h = x[1] - x[0]
    xi = x[1:-1]
    A = a.value_at(xi / eps) / h**2
    B = b.value_at(xi / eps) / (2 * h * eps)
    ab = np.zeros((3, n - 1))
    ab[0, 1:] = (A + B)[:-1]
    ab[1] = -2 * A
    ab[2, :-1] = (A - B)[1:]
    rhs = np.zeros(n - 1)
    rhs[-1] = -(A + B)[-1]
    u = np.concatenate([[0.0], solve_banded((1, 1), ab, rhs), [1.0]])
    return x, u


# barrier -----------------------------------------------------------------------


@dataclass(frozen=True)
class SupersolutionReport:
    """Outcome of the barrier check at one ``(eps, K)``."""

    eps: float
    K: float
    max_Lw: float
    max_Lw_fd: float
    max_g: float
    h_min: float
    delta0: float
    ok: bool


def barrier_profile(K: float, x, order: int = 4) -> np.ndarray:
    """``h_K = (1 - e^{-Kx})/(1 - e^{-K})`` and its derivatives up to ``order``."""
    x = np.asarray(x, dtype=float)
    D = -np.expm1(-K)
    h1 = K * np.exp(-K * x) / D
    out = [-np.expm1(-K * x) / D, h1]
    for k in range(2, order + 1):
        out.append((-K) ** (k - 1) * h1)
    return np.stack(out)


def verify_supersolution(a: PeriodicFn, b: PeriodicFn, eps: float, K: float = 8.0, delta0: float = 0.05, delta: float = 0.1, nu: float = MIXED_NU, per_period: int = POINTS_PER_PERIOD) -> SupersolutionReport:
    """Check ``L^e w < 0`` for ``w = u_eps - h_K + g`` with ``g = eps^2 A^e h'' + eps B^e h'``.

    ``L^e`` acts as ``a^e d^2 + eps^-1 b^e d``.  ``L^e u_eps = 0`` exactly, so
    ``L^e w = L^e(g - h_K)`` is evaluated from closed-form derivatives of
    ``h_K`` and of the correctors ``A``, ``B``.  The centered-difference
    value on the same grid is reported alongside as ``max_Lw_fd``.
    """
    if not K > 1:
        raise ValueError("K must exceed 1")
    coeffs = DriftCoeffs(a, b, nu)
    if not coeffs.G1 > 0:
        raise ValueError("barrier check needs G(1) > 0")
    cell = invariant_density(coeffs)
    A = solve_cell(coeffs, a, cell).u
    B = solve_cell(coeffs, b, cell).u
    x = _grid(0.0, 1.0, eps, per_period)
    xi = x[1:-1]
    y = xi / eps
    h = barrier_profile(K, xi)
    Aj = A.jet(y, 2).derivatives()
    Bj = B.jet(y, 2).derivatives()
    ay, by = a.value_at(y), b.value_at(y)
    g = eps**2 * Aj[0] * h[2] + eps * Bj[0] * h[1]
    g1 = eps * Aj[1] * h[2] + eps**2 * Aj[0] * h[3] + Bj[1] * h[1] + eps * Bj[0] * h[2]
    g2 = Aj[2] * h[2] + 2 * eps * Aj[1] * h[3] + eps**2 * Aj[0] * h[4] + Bj[2] * h[1] / eps + 2 * Bj[1] * h[2] + eps * Bj[0] * h[3]
    Lw = ay * (g2 - h[2]) + by * (g1 - h[1]) / eps
    # centered differences on the sampled w, for comparison
    evaluate, _ = _closed_form(coeffs, eps)
    gx = np.zeros_like(x)
    gx[1:-1] = g
    hx = barrier_profile(K, x, 0)[0]
    gx[0] = eps * B.value_at(0.0) * barrier_profile(K, 0.0, 1)[1] + eps**2 * A.value_at(0.0) * barrier_profile(K, 0.0, 2)[2]
    gx[-1] = eps * B.value_at(1 / eps) * barrier_profile(K, 1.0, 1)[1] + eps**2 * A.value_at(1 / eps) * barrier_profile(K, 1.0, 2)[2]
    w = evaluate(x) - hx + gx
    dx = np.diff(x)
    hl, hr = dx[:-1], dx[1:]
    d2 = 2 * (hl * w[2:] - (hl + hr) * w[1:-1] + hr * w[:-2]) / (hl * hr * (hl + hr))
    d1 = (w[2:] - w[:-2]) / (hl + hr)
    Lw_fd = ay * d2 + by * d1 / eps
    max_g = float(np.max(np.abs(gx)))
    m = (x >= delta) & (x <= 1.0)
    h_min = float(np.min(hx[m]))
    max_Lw = float(np.max(Lw))
    return SupersolutionReport(eps, K, max_Lw, float(np.max(Lw_fd)), max_g, h_min, delta0, bool(max_Lw < 0 and max_g <= delta0))


def barrier_search(a: PeriodicFn, b: PeriodicFn, K: float = 8.0, eps_start: float = 1 / 64, max_halvings: int = 14, **kwargs) -> list[SupersolutionReport]:
    """Halve ``eps`` from ``eps_start`` until the barrier check succeeds (K fixed first)."""
    reports = []
    eps = eps_start
    for _ in range(max_halvings + 1):
        rep = verify_supersolution(a, b, eps, K, **kwargs)
        reports.append(rep)
        if rep.ok:
            break
        eps /= 2
    return reports
