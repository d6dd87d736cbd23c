"""Truncated Taylor arithmetic used to propagate derivatives exactly.

A :class:`Jet` holds the normalized Taylor coefficients ``f^(k)(x) / k!`` for
``k = 0..order`` at a batch of points.  Products, quotients, ``exp`` and the
trigonometric functions follow the standard recurrences, so every derivative
is exact up to rounding.
"""

from __future__ import annotations

from math import factorial

import numpy as np


class Jet:
    """Taylor coefficients of order ``order`` at an array of points.

    Parameters
    ----------
    coeffs : ndarray, shape (order + 1, *shape)
        ``coeffs[k]`` is the k-th derivative divided by ``k!``.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=float)

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[0]

    @classmethod
    def variable(cls, x, order: int, scale: float = 1.0) -> "Jet":
        """Jet of the affine map ``t -> scale * t`` evaluated at ``x``."""
        x = np.asarray(x, dtype=float)
        c = np.zeros((order + 1,) + x.shape)
        c[0] = scale * x
        if order >= 1:
            c[1] = scale
        return cls(c)

    @classmethod
    def constant(cls, value, order: int, shape=()) -> "Jet":
        c = np.zeros((order + 1,) + tuple(shape))
        c[0] = value
        return cls(c)

    def derivative(self, k: int) -> np.ndarray:
        """Return the k-th derivative (not normalized)."""
        return self.coeffs[k] * factorial(k)

    def derivatives(self) -> np.ndarray:
        f = np.array([factorial(k) for k in range(self.order + 1)], dtype=float)
        return self.coeffs * f.reshape((-1,) + (1,) * (self.coeffs.ndim - 1))

    def truncate(self, order: int) -> "Jet":
        return Jet(self.coeffs[: order + 1])

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.order, np.shape(self.coeffs[0]))

    def __add__(self, other):
        other = self._lift(other)
        return Jet(self.coeffs + other.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs)

    def __sub__(self, other):
        other = self._lift(other)
        return Jet(self.coeffs - other.coeffs)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coeffs * other)
        a, b = self.coeffs, other.coeffs
        n = a.shape[0]
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
        for k in range(n):
            out[k] = sum(a[i] * b[k - i] for i in range(k + 1))
        return Jet(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coeffs / other)
        a, b = self.coeffs, other.coeffs
        n = a.shape[0]
        q = np.zeros(np.broadcast_shapes(a.shape, b.shape))
        for k in range(n):
            acc = a[k] - sum(b[i] * q[k - i] for i in range(1, k + 1))
            q[k] = acc / b[0]
        return Jet(q)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def exp(self) -> "Jet":
        a = self.coeffs
        e = np.zeros_like(a)
        e[0] = np.exp(a[0])
        for k in range(1, a.shape[0]):
            e[k] = sum(i * a[i] * e[k - i] for i in range(1, k + 1)) / k
        return Jet(e)

    def sincos(self) -> tuple["Jet", "Jet"]:
        a = self.coeffs
        s = np.zeros_like(a)
        c = np.zeros_like(a)
        s[0], c[0] = np.sin(a[0]), np.cos(a[0])
        for k in range(1, a.shape[0]):
            s[k] = sum(i * a[i] * c[k - i] for i in range(1, k + 1)) / k
            c[k] = -sum(i * a[i] * s[k - i] for i in range(1, k + 1)) / k
        return Jet(s), Jet(c)

    def where(self, mask) -> "Jet":
        """Zero every coefficient outside ``mask``."""
        return Jet(np.where(mask, self.coeffs, 0.0))


def solve_linear_ode_jet(y0, a: Jet, b: Jet, r: Jet) -> Jet:
    """Taylor coefficients of ``y`` solving ``a y' + b y = r`` with ``y(x) = y0``.

    The three coefficient jets must share an order ``n``; the result has
    order ``n + 1``.
    """
    n = a.order
    y0 = np.asarray(y0, dtype=float)
    shape = np.broadcast_shapes(y0.shape, a.coeffs.shape[1:], b.coeffs.shape[1:], r.coeffs.shape[1:])
    y = np.zeros((n + 2,) + shape)
    y[0] = y0
    A, B, R = a.coeffs, b.coeffs, r.coeffs
    for k in range(n + 1):
        acc = R[k] - sum(B[i] * y[k - i] for i in range(k + 1))
        acc = acc - sum(A[i] * (k - i + 1) * y[k - i + 1] for i in range(1, k + 1))
        y[k + 1] = acc / ((k + 1) * A[0])
    return Jet(y)


def integrate_jet(value, integrand: Jet) -> Jet:
    """Jet of ``F`` with ``F(x) = value`` and ``F' = integrand``."""
    c = integrand.coeffs
    n = c.shape[0]
    out = np.zeros((n + 1,) + np.broadcast_shapes(np.shape(value), c.shape[1:]))
    out[0] = value
    for k in range(n):
        out[k + 1] = c[k] / (k + 1)
    return Jet(out)
