"""Smooth periodic functions of one variable, bump families and rescalings."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .jets import Jet
from .quadrature import ChebPrimitive, gauss_composite

JetFn = Callable[[np.ndarray, int], Jet]

#: Gauss panels per feature scale used by :func:`quad_period`.
PANELS_PER_FEATURE = 16


@dataclass(frozen=True, eq=False)
class PeriodicFn:
    """A smooth function with a declared period, evaluable with derivatives.

    Parameters
    ----------
    jet_fn : callable
        ``jet_fn(x, order)`` returns a :class:`~harnacklab.jets.Jet` with the
        Taylor coefficients up to ``order`` at the points ``x``.
    period : float
        Declared period.
    smoothness_order : int
        Number of derivatives the function advertises.
    feature_scale : float
        Smallest length over which the function changes appreciably; drives
        quadrature panel counts.
    """

    jet_fn: JetFn
    period: float = 1.0
    smoothness_order: int = 8
    feature_scale: float = 1.0
    label: str = ""
    is_constant: bool = field(default=False)

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("period must be positive")
        if self.smoothness_order < 2:
            raise ValueError("smoothness_order must be at least 2")

    def jet(self, x, order: int) -> Jet:
        return self.jet_fn(np.asarray(x, dtype=float), order)

    def value_at(self, x) -> np.ndarray:
        return self.jet(x, 0).coeffs[0]

    def derivative_at(self, x) -> np.ndarray:
        return self.jet(x, 1).coeffs[1]

    def nth_derivative(self, x, k: int) -> np.ndarray:
        return self.jet(x, k).derivative(k)

    def __call__(self, x) -> np.ndarray:
        return self.value_at(x)

    # arithmetic ---------------------------------------------------------

    def _coerce(self, other) -> "PeriodicFn":
        if isinstance(other, PeriodicFn):
            if other.is_constant or self.is_constant:
                return other
            if not np.isclose(other.period, self.period, rtol=1e-14, atol=0.0):
                raise ValueError("periods differ")
            return other
        return constant(float(other), self.period)

    def _combine(self, other, op, label) -> "PeriodicFn":
        other = self._coerce(other)
        base = other if self.is_constant else self
        f, g = self.jet_fn, other.jet_fn
        return PeriodicFn(
            lambda x, n: op(f(x, n), g(x, n)),
            period=base.period,
            smoothness_order=min(self.smoothness_order, other.smoothness_order),
            feature_scale=min(self.feature_scale, other.feature_scale),
            label=label,
            is_constant=self.is_constant and other.is_constant,
        )

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b, "sum")

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b, "difference")

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        return self._combine(other, lambda a, b: a * b, "product")

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._combine(other, lambda a, b: a / b, "quotient")

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __neg__(self):
        return self * -1.0

    def derivative(self) -> "PeriodicFn":
        """The derivative as a new periodic function."""
        f = self.jet_fn

        def jet_fn(x, n):
            c = f(x, n + 1).coeffs
            k = np.arange(1, n + 2).reshape((-1,) + (1,) * (c.ndim - 1))
            return Jet(c[1:] * k)

        return PeriodicFn(jet_fn, self.period, max(self.smoothness_order - 1, 2), self.feature_scale, "derivative", self.is_constant)

    def exp(self) -> "PeriodicFn":
        f = self.jet_fn
        return PeriodicFn(lambda x, n: f(x, n).exp(), self.period, self.smoothness_order, self.feature_scale, "exp", self.is_constant)

    # integration ---------------------------------------------------------

    @cached_property
    def _primitive(self) -> ChebPrimitive:
        panels = max(8, int(np.ceil(4 * self.period / self.feature_scale)))
        return ChebPrimitive(self.value_at, 0.0, self.period, panels)

    def sample(self, n: int = 10_000) -> tuple[np.ndarray, np.ndarray]:
        """Values on ``n`` uniform points of one period."""
        x = np.arange(n) * (self.period / n)
        return x, self.value_at(x)


def _wrap(x, period):
    """Map to ``[-period/2, period/2)``."""
    return x - period * np.floor(x / period + 0.5)


def constant(value: float, period: float = 1.0) -> PeriodicFn:
    """The constant function ``value``."""

    def jet_fn(x, n):
        return Jet.constant(value, n, np.shape(x))

    return PeriodicFn(jet_fn, period, 64, period, f"constant {value:g}", is_constant=True)


def trig(k: int, kind: str = "cos", amplitude: float = 1.0, phase: float = 0.0, period: float = 1.0) -> PeriodicFn:
    """``amplitude * cos(2 pi k x / period + phase)`` (or ``sin``)."""
    if kind not in ("cos", "sin"):
        raise ValueError("kind must be 'cos' or 'sin'")
    w = 2 * np.pi * k / period

    def jet_fn(x, n):
        arg = Jet.variable(x, n, w) + phase
        s, c = arg.sincos()
        return (c if kind == "cos" else s) * amplitude

    scale = period / max(abs(k), 1)
    return PeriodicFn(jet_fn, period, 64, scale, f"{kind}{k}", is_constant=(k == 0 and kind == "cos"))


# bumps ---------------------------------------------------------------------


@dataclass(frozen=True)
class BumpSpec:
    """A compactly supported bump: ``height`` at ``center``, zero beyond ``width``."""

    center: float
    width: float
    height: float = 1.0
    period: float = 1.0


def _profile_jet(s_jet: Jet) -> Jet:
    """``exp(1 - 1/(1 - s^2))`` on ``|s| < 1``, zero elsewhere."""
    s0 = s_jet.coeffs[0]
    inside = np.abs(s0) < 1.0
    safe = Jet(np.where(inside, s_jet.coeffs, 0.0))
    q = 1.0 - safe * safe
    out = (1.0 - 1.0 / q).exp()
    return out.where(inside)


def make_bump(spec: BumpSpec) -> PeriodicFn:
    """C-infinity bump with the ``exp(-1/(1 - s^2))`` profile, periodized.

    Raises
    ------
    ValueError
        If ``width >= period / 2``.
    """
    if not 0 < spec.width < spec.period / 2:
        raise ValueError("bump width must lie in (0, period/2)")
    c, w, h, P = spec.center % spec.period, spec.width, spec.height, spec.period

    def jet_fn(x, n):
        s = Jet.variable(_wrap(x - c, P), n, 1.0 / w)
        return _profile_jet(s) * h

    return PeriodicFn(jet_fn, P, 64, w / 2, f"bump({c:g},{w:g})")


# quadrature ----------------------------------------------------------------


def quad_period(f: PeriodicFn) -> float:
    """Integral of ``f`` over one period by composite Gauss-Legendre."""
    if f.is_constant:
        return float(f.value_at(0.0)) * f.period
    panels = max(16, int(np.ceil(PANELS_PER_FEATURE * f.period / f.feature_scale)))
    return gauss_composite(f.value_at, 0.0, f.period, panels)


def antiderivative(f: PeriodicFn, x) -> np.ndarray:
    """``int_0^x f`` using whole-period decomposition for large ``|x|``."""
    x = np.asarray(x, dtype=float)
    P = f.period
    n = np.floor(x / P)
    frac = x - n * P
    prim = f._primitive
    return n * prim.total + prim(frac)


# rescaling -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RescaledFn(PeriodicFn):
    """``x -> base(x / eps)``, keeping a handle on the base function."""

    base: PeriodicFn | None = None
    eps: float = 1.0

    def two_scale(self, t, x) -> np.ndarray:
        """Evaluate ``base(t / eps^2 + x / eps)``."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        P = self.base.period
        y = np.mod(t / self.eps**2, P) + np.mod(x / self.eps, P)
        return self.base.value_at(y)


def rescale_fast(f: PeriodicFn, eps: float) -> RescaledFn:
    """Return ``x -> f(x / eps)`` with period ``eps * f.period``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    g = f.jet_fn

    def jet_fn(x, n):
        c = g(x / eps, n).coeffs
        k = np.arange(n + 1).reshape((-1,) + (1,) * (c.ndim - 1))
        return Jet(c * eps ** (-k.astype(float)))

    return RescaledFn(
        jet_fn,
        period=eps * f.period,
        smoothness_order=f.smoothness_order,
        feature_scale=eps * f.feature_scale,
        label=f"{f.label}/eps",
        is_constant=f.is_constant,
        base=f,
        eps=eps,
    )


def two_scale_evaluator(f: PeriodicFn, eps: float) -> Callable:
    """``(t, x) -> f(t / eps^2 + x / eps)``."""
    return rescale_fast(f, eps).two_scale


# coefficient families --------------------------------------------------------

ELLIPTIC = "elliptic"
PARABOLIC = "parabolic"

#: Largest slope allowed for the travelling-family density perturbation.
PARABOLIC_MAX_SLOPE = 0.35


@dataclass(frozen=True, eq=False)
class EtaPair:
    """Two perturbation profiles with ``eta1`` sitting where ``eta2`` rises."""

    eta1: PeriodicFn
    eta2: PeriodicFn
    delta0: float
    variant: str

    def support_margin(self, n: int = 10_000) -> float:
        """Minimum of ``eta2'`` over a dense sampling of ``supp eta1``."""
        x = (np.arange(n) + 0.5) / n
        on = self.eta1.value_at(x) > 0
        return float(np.min(self.eta2.derivative_at(x[on])))


def _rising_interval(eta2: PeriodicFn, n: int = 100_000) -> tuple[float, float, float]:
    """Return (argmax of eta2', left zero, right zero) of the positive-slope run."""
    x = (np.arange(n) + 0.5) / n
    d = eta2.derivative_at(x)
    i = int(np.argmax(d))
    pos = d > 0
    j = i
    while pos[j - 1]:
        j -= 1
    k = i
    while pos[(k + 1) % n]:
        k += 1
    return float(x[i]), float(x[j]), float(x[k])


def make_eta_pair(delta0: float = 0.25, variant: str = ELLIPTIC, fill: float = 0.9) -> EtaPair:
    """Build the perturbation pair for the mixed elliptic or travelling family.

    ``eta2`` is a bump (elliptic) or a bump minus a wider opposite-sign bump
    of equal mass (travelling).  ``eta1`` has height ``delta0`` and sits at
    the midpoint of the interval where ``eta2`` rises, covering the fraction
    ``fill`` of it.  For the travelling variant the amplitude of ``eta2`` is
    capped so that ``|eta2'| <= PARABOLIC_MAX_SLOPE``, which keeps
    ``p = (1 - a v')/v`` inside ``[0.5, 2]``.

    Raises
    ------
    ValueError
        On a bad ``delta0`` or ``variant``, or if the support condition fails.
    """
    if not 0 < delta0 <= 0.5:
        raise ValueError("delta0 must lie in (0, 0.5]")
    if not 0 < fill < 1:
        raise ValueError("fill must lie in (0, 1)")
    if variant == ELLIPTIC:
        eta2 = make_bump(BumpSpec(0.5, 0.45, delta0))
    elif variant == PARABOLIC:
        pos = make_bump(BumpSpec(0.25, 0.23, 1.0))
        neg = make_bump(BumpSpec(0.74, 0.24, 1.0))
        kappa = quad_period(pos) / quad_period(neg)
        raw = pos - neg * kappa
        x = (np.arange(20_000) + 0.5) / 20_000
        amp = np.max(np.abs(raw.value_at(x)))
        slope = np.max(np.abs(raw.derivative_at(x)))
        scale = min(delta0 / amp, PARABOLIC_MAX_SLOPE / slope)
        eta2 = raw * scale
    else:
        raise ValueError(f"unknown variant {variant!r}")
    _, lo, hi = _rising_interval(eta2)
    center = 0.5 * (lo + hi)
    width = fill * 0.5 * (hi - lo)
    eta1 = make_bump(BumpSpec(center, width, delta0))
    pair = EtaPair(eta1, eta2, delta0, variant)
    if not pair.support_margin() > 0:
        raise ValueError("eta1 support is not inside {eta2' > 0}")
    return pair
