"""Cylinders, oscillation, Harnack ratios, Hoelder exponents and the counterexample runs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .bloch import BlochPolicy, solve_two_scale_bloch
from .elliptic_cell import effective_transport
from .elliptic_experiments import solve_mixed_dirichlet
from .parabolic_solver import Field, Profile, SpaceTimeGrid, bump_profile
from .periodic_fn import PeriodicFn
from .quadrature import _gauss

MIN_NODES = 4
TINY = np.finfo(float).tiny


class MetricError(ValueError):
    """Region does not meet the resolution or sign requirements."""


@dataclass(frozen=True)
class Region:
    """Closed box ``[t0, t1] x [x0, x1]``; ``zero_before_start`` extends the field by 0 for ``t <= 0``."""

    t0: float
    t1: float
    x0: float
    x1: float
    zero_before_start: bool = False


@dataclass(frozen=True)
class Cylinder:
    """``(s - r^2, s) x (y - r, y + r)`` with top center ``(s, y)``."""

    s: float
    y: float
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be positive")

    @property
    def center(self) -> tuple[float, float]:
        return (self.s, self.y)

    def shifted(self) -> "Cylinder":
        """The cylinder at ``Y_r = (s - 2 r^2, y)``."""
        return Cylinder(self.s - 2 * self.r**2, self.y, self.r)

    def scaled(self, factor: float) -> "Cylinder":
        return Cylinder(self.s, self.y, self.r * factor)

    def region(self, zero_before_start: bool = False) -> Region:
        return Region(self.s - self.r**2, self.s, self.y - self.r, self.y + self.r, zero_before_start)


@dataclass
class HarnackReport:
    """Diagnostics at one ``eps``."""

    eps: float
    harnack_ratio: float
    osc_ratio: float
    alpha_hat: float | None
    probe: dict
    extras: dict = field(default_factory=dict)


def _select(fld: Field, region: Region):
    """Values at grid nodes inside ``region`` and whether zero-extended times were covered."""
    t, x = fld.t, fld.x
    it = (t >= region.t0 - 1e-14 * max(1.0, abs(region.t0))) & (t <= region.t1 + 1e-14 * max(1.0, abs(region.t1)))
    ix = (x >= region.x0 - 1e-12) & (x <= region.x1 + 1e-12)
    static = fld.meta.get("static", False)
    if static:
        it = np.ones_like(t, dtype=bool)
    if ix.sum() < MIN_NODES or (not static and it.sum() < MIN_NODES):
        raise MetricError(f"region {region} holds {int(it.sum())} x {int(ix.sum())} nodes; need {MIN_NODES} per axis")
    vals = fld.values[np.ix_(it, ix)]
    extended = region.zero_before_start and region.t0 < 0 and not static
    return vals, extended


def oscillation(fld: Field, region: Region) -> float:
    """``sup - inf`` over the grid nodes of ``region`` (0 included for zero-extended times)."""
    vals, extended = _select(fld, region)
    hi, lo = float(np.max(vals)), float(np.min(vals))
    if extended:
        hi, lo = max(hi, 0.0), min(lo, 0.0)
    return hi - lo


def sup_over(fld: Field, region: Region) -> float:
    vals, extended = _select(fld, region)
    return max(float(np.max(vals)), 0.0) if extended else float(np.max(vals))


def inf_over(fld: Field, region: Region) -> float:
    vals, extended = _select(fld, region)
    return min(float(np.min(vals)), 0.0) if extended else float(np.min(vals))


def harnack_ratio(fld: Field, Y: tuple[float, float], r: float) -> float:
    """``sup_{C_r(Y_r)} u / inf_{C_r(Y)} u``; ``inf`` when the infimum is not positive.

    Raises
    ------
    MetricError
        If ``u < -1e-12`` at a node of ``C_2r(Y)``.
    """
    cyl = Cylinder(Y[0], Y[1], r)
    big = Cylinder(Y[0], Y[1], 2 * r).region()
    t, x = fld.t, fld.x
    it = (t >= big.t0) & (t <= big.t1)
    ix = (x >= big.x0) & (x <= big.x1)
    if fld.meta.get("static", False):
        it[:] = True
    if it.any() and ix.any() and np.min(fld.values[np.ix_(it, ix)]) < -1e-12:
        raise MetricError("field is negative on C_2r(Y)")
    top = sup_over(fld, cyl.shifted().region())
    bottom = inf_over(fld, cyl.region())
    if bottom <= TINY:
        return float("inf")
    return top / bottom


def holder_exponent_estimate(fld: Field, Y: tuple[float, float], r: float, levels: int = 4) -> float | None:
    """Least-squares slope of ``log osc`` against ``log rho`` over ``rho = r / 2^j``.

    Returns ``None`` when every oscillation vanishes.
    """
    rho = r / 2.0 ** np.arange(levels + 1)
    osc = np.array([oscillation(fld, Cylinder(Y[0], Y[1], q).region()) for q in rho])
    if np.all(osc <= 0):
        return None
    if np.any(osc <= 0):
        raise MetricError("oscillation vanishes on part of the ladder")
    slope, _ = np.polyfit(np.log(rho), np.log(osc), 1)
    return float(slope)


def static_field(x: np.ndarray, u: np.ndarray, t_span: tuple[float, float] = (-4.0, 4.0), rows: int = 2) -> Field:
    """A time-independent field; cylinders then reduce to intervals."""
    x = np.asarray(x, dtype=float)
    grid = SpaceTimeGrid(float(x[0]), float(x[-1]), max(16, x.size - 1), t_span[1] - t_span[0], rows - 1)
    if x.size - 1 != grid.nx or not np.allclose(x, grid.x, rtol=0, atol=1e-12):
        raise ValueError("static_field needs a uniform x with at least 17 nodes")
    t = np.linspace(t_span[0], t_span[1], rows)
    return Field(grid, t, np.tile(np.asarray(u, dtype=float), (rows, 1)), meta={"static": True})


# elliptic counterexample ----------------------------------------------------------


def counterexample_harnack_elliptic(a1: PeriodicFn, a2: PeriodicFn, eps_list, holder_levels: int = 4) -> list[HarnackReport]:
    """``N(eps) = ut(0)/ut(-1/2)`` for ``ut = 1 + u_eps``, ordered by ``eps`` descending."""
    out = []
    for eps in sorted(eps_list, reverse=True):
        sol = solve_mixed_dirichlet(a1, a2, eps)
        u_half = float(sol(np.array(-0.5)))
        N = 1.0 / (1.0 + u_half)
        n = max(1024, int(np.ceil(64 / eps)))
        x = np.linspace(-1.0, 1.0, 2 * n + 1)
        fld = static_field(x, 1.0 + sol(x))
        osc_r = oscillation(fld, Region(0, 0, -0.5, 0.5))
        osc_in = oscillation(fld, Region(0, 0, -0.25, 0.25))
        alpha = float(np.log2(osc_r / osc_in)) if osc_r > 0 and osc_in > 0 else None
        fit = holder_exponent_estimate(fld, (0.0, 0.0), 0.5, holder_levels)
        out.append(
            HarnackReport(
                eps,
                N,
                osc_in / osc_r,
                alpha,
                {"Y": (0.0, 0.0), "r": 0.5, "points": (0.0, -0.5)},
                {"u_minus_half": u_half, "sup_err_01": sol.sup_error(1.0, 0.1, 1.0), "alpha_fit": fit},
            )
        )
    return out


def log_fit(eps_list, N_list) -> tuple[float, float]:
    """Slope and ``R^2`` of ``log N`` against ``1/eps``."""
    xs = 1.0 / np.asarray(eps_list, dtype=float)
    ys = np.log(np.asarray(N_list, dtype=float))
    slope, icpt = np.polyfit(xs, ys, 1)
    fit = slope * xs + icpt
    ss_res = np.sum((ys - fit) ** 2)
    ss_tot = np.sum((ys - ys.mean()) ** 2)
    return float(slope), float(1 - ss_res / ss_tot) if ss_tot > 0 else 1.0


# parabolic counterexamples --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TransportRun:
    """One solve of the two-scale problem sized for the counterexample geometry."""

    eps: float
    c: float
    b0: float
    p0: float
    t_eps: float
    target: float
    field: Field
    transport_error: float
    delta: float


def _default_eps_start(c: float, t_first: float = 0.02) -> float:
    return 2.0 ** np.floor(np.log2(abs(c) * t_first / 2))


def transport_run(a: PeriodicFn, p: PeriodicFn, eps: float, delta: float = 0.2, rows: int = 201, dx: float = 0.002, policy: BlochPolicy = BlochPolicy(), nu: float = 0.5, cell=None) -> TransportRun:
    """Solve up to ``2 t_eps`` with ``t_eps = 2 eps/|c|`` and record the transport error at ``t_eps``."""
    if cell is None:
        cell = effective_transport(a, p, nu)
    p0, b0, c = cell
    if abs(b0) <= 1e-10:
        raise MetricError("b0 vanishes: the transport counterexample needs b0 != 0")
    t_eps = 2 * eps / abs(c)
    target = -2.0 * np.sign(c)
    g = bump_profile(0.0, delta)
    lo, hi = (-1.0, 4.6) if target > 0 else (-4.6, 1.0)
    times = np.linspace(0.0, 2 * t_eps, rows)
    fld = solve_two_scale_bloch(a, p, eps, g, times, lo, hi, dx, policy)
    k = int(np.argmin(np.abs(fld.t - t_eps)))
    err = float(np.max(np.abs(fld.values[k] - g(fld.x - target))))
    fld.meta.update(t_eps=t_eps, target=target)
    return TransportRun(eps, c, b0, p0, t_eps, target, fld, err, delta)


def select_eps(a: PeriodicFn, p: PeriodicFn, delta: float = 0.2, eps_start: float | None = None, max_halvings: int = 8, **kwargs) -> tuple[TransportRun, list[dict]]:
    """Halve ``eps`` until ``|u(t_eps, .) - g(. - 2)| <= delta/2``."""
    cell = effective_transport(a, p, kwargs.get("nu", 0.5))
    if abs(cell[1]) <= 1e-10:
        raise MetricError("b0 vanishes: the transport counterexample needs b0 != 0")
    eps = _default_eps_start(cell[2]) if eps_start is None else eps_start
    history = []
    for _ in range(max_halvings + 1):
        run = transport_run(a, p, eps, delta, cell=cell, **kwargs)
        history.append({"eps": eps, "t_eps": run.t_eps, "transport_error": run.transport_error})
        if run.transport_error <= delta / 2:
            return run, history
        eps /= 2
    return run, history


def oscillation_report(run: TransportRun) -> HarnackReport:
    """Oscillation over ``C_delta(Y^e)`` against ``C_1(Y^e)``, ``Y^e = (t_eps, +-2)``."""
    d, fld = run.delta, run.field
    outer = Cylinder(run.t_eps, run.target, 1.0).region(zero_before_start=True)
    inner = Cylinder(run.t_eps, run.target, d).region(zero_before_start=True)
    osc_in, osc_out = oscillation(fld, inner), oscillation(fld, outer)
    sup_in, inf_in = sup_over(fld, inner), inf_over(fld, inner)
    neg = max(0.0, -inner.t0) / (inner.t1 - inner.t0)
    ok = osc_in >= (1 - d) * osc_out and sup_in >= 1 - d / 2 and inf_in <= d / 2
    return HarnackReport(
        run.eps,
        float("nan"),
        osc_in / osc_out if osc_out > 0 else float("nan"),
        None,
        {"Y": (run.t_eps, run.target), "r_outer": 1.0, "r_inner": d},
        {
            "osc_inner": osc_in,
            "osc_outer": osc_out,
            "sup_inner": sup_in,
            "inf_inner": inf_in,
            "t_eps": run.t_eps,
            "c": run.c,
            "b0": run.b0,
            "p0": run.p0,
            "transport_error": run.transport_error,
            "inner_negative_time_fraction": neg,
            "u_min": float(fld.values.min()),
            "u_max": float(fld.values.max()),
            "ok": bool(ok),
        },
    )


def harnack_report(run: TransportRun) -> HarnackReport:
    """Sup over ``C_r(Y)`` and ``C_r(Y_r)`` with ``Y = (4 r^2, +-2)``, ``2 r^2 = t_eps``."""
    d, fld = run.delta, run.field
    r = np.sqrt(run.t_eps / 2)
    Y = (4 * r**2, run.target)
    cyl = Cylinder(*Y, r)
    low = cyl.shifted()
    sup_Y = sup_over(fld, cyl.region())
    sup_Yr = sup_over(fld, low.region())
    ratio = harnack_ratio(fld, Y, r)
    # transport phase on C_r(Y): c t/eps + x stays beyond 1/2 on the far side of supp g
    reg = cyl.region()
    phase = np.array([run.c * reg.t0 / run.eps, run.c * reg.t1 / run.eps])[:, None] + np.array([reg.x0, reg.x1])[None, :]
    phase_ok = bool(np.all(-np.sign(run.c) * phase <= -0.5)) if run.c != 0 else False
    ok = sup_Y <= d and sup_Yr >= 1 - d
    return HarnackReport(
        run.eps,
        ratio,
        float("nan"),
        None,
        {"Y": Y, "r": r, "Y_r": (low.s, low.y)},
        {
            "sup_C_r_Y": sup_Y,
            "sup_C_r_Y_r": sup_Yr,
            "ratio_lower_bound": (1 - d) / d,
            "phase_ok": phase_ok,
            "Y_r_equals_Y_eps": bool(np.isclose(low.s, run.t_eps, rtol=1e-12)),
            "t_eps": run.t_eps,
            "c": run.c,
            "ok": bool(ok),
        },
    )


def counterexample_oscillation_parabolic(a: PeriodicFn, p: PeriodicFn, delta: float = 0.2, **kwargs) -> HarnackReport:
    """Pick ``eps`` by halving, then compare oscillations on ``C_delta(Y^e)`` and ``C_1(Y^e)``."""
    run, history = select_eps(a, p, delta, **kwargs)
    rep = oscillation_report(run)
    rep.extras["eps_history"] = history
    return rep


def counterexample_harnack_parabolic(a: PeriodicFn, p: PeriodicFn, delta: float = 0.2, **kwargs) -> HarnackReport:
    """Pick ``eps`` by halving, then evaluate the Harnack configuration ``Y = (4 r^2, 2)``."""
    run, history = select_eps(a, p, delta, **kwargs)
    rep = harnack_report(run)
    rep.extras["eps_history"] = history
    return rep


# constant-coefficient control -------------------------------------------------------


def heat_log_solution(g: Profile, t, x, nodes: int = 400) -> np.ndarray:
    """``log`` of ``g`` convolved with the unit heat kernel, by Gauss quadrature in the log domain."""
    lo, hi = g.support
    tg, wg = _gauss(nodes)
    y = 0.5 * (hi - lo) * tg + 0.5 * (hi + lo)
    lw = np.log(0.5 * (hi - lo) * wg) + g.log(y)
    t = np.asarray(t, dtype=float)[..., None]
    x = np.asarray(x, dtype=float)[..., None]
    expo = lw - (x - y) ** 2 / (4 * t)
    return logsumexp(expo, axis=-1) - 0.5 * np.log(4 * np.pi * t[..., 0])


def heat_control(eps: float, c: float, delta: float = 0.2, target: float = 2.0, nt: int = 64, nx: int = 64) -> HarnackReport:
    """Harnack configuration of :func:`harnack_report` for ``a = p = 1`` (exact solution)."""
    g = bump_profile(0.0, delta)
    t_eps = 2 * eps / abs(c)
    r = np.sqrt(t_eps / 2)
    cyl = Cylinder(4 * r**2, target, r)
    low = cyl.shifted()

    def log_vals(cy):
        reg = cy.region()
        T, X = np.meshgrid(np.linspace(reg.t0, reg.t1, nt), np.linspace(reg.x0, reg.x1, nx), indexing="ij")
        return heat_log_solution(g, T, X)

    lsup = float(np.max(log_vals(low)))
    linf = float(np.min(log_vals(cyl)))
    ratio = float(np.exp(lsup - linf))
    return HarnackReport(eps, ratio, float("nan"), None, {"Y": (cyl.s, cyl.y), "r": r}, {"log_sup_C_r_Y_r": lsup, "log_inf_C_r_Y": linf, "t_eps": t_eps})
