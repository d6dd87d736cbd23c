"""Composite Gauss-Legendre quadrature and piecewise Chebyshev primitives."""

from __future__ import annotations

from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial import legendre as L

DEGREE = 24
GAUSS_NODES = 20


@lru_cache(maxsize=None)
def _gauss(n: int):
    return L.leggauss(n)


@lru_cache(maxsize=None)
def _cheb_setup(deg: int):
    # first-kind Chebyshev points on [-1, 1] and the values -> coefficients map
    k = np.arange(deg + 1)
    t = np.cos(np.pi * (k + 0.5) / (deg + 1))[::-1].copy()
    vinv = np.linalg.inv(C.chebvander(t, deg))
    return t, vinv


def gauss_composite(fn: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, panels: int, nodes: int = GAUSS_NODES) -> float:
    """Integrate ``fn`` over ``[lo, hi]`` with ``panels`` equal Gauss panels."""
    t, w = _gauss(nodes)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = mid[:, None] + half[:, None] * t[None, :]
    vals = np.asarray(fn(x.ravel()), dtype=float).reshape(x.shape)
    return float(np.sum(half[:, None] * w[None, :] * vals))


def clenshaw_rows(coeffs: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Evaluate one Chebyshev series per point: ``coeffs[i]`` at ``t[i]``."""
    n = coeffs.shape[1]
    b1 = np.zeros_like(t)
    b2 = np.zeros_like(t)
    for k in range(n - 1, 0, -1):
        b1, b2 = 2.0 * t * b1 - b2 + coeffs[:, k], b1
    return t * b1 - b2 + coeffs[:, 0]


class ChebPrimitive:
    """Running integral ``x -> int_lo^x fn`` on ``[lo, hi]``.

    ``fn`` is sampled once at Chebyshev points of ``panels`` equal panels;
    each panel's interpolant is integrated exactly.

    Parameters
    ----------
    fn : callable
        Vectorized integrand.
    lo, hi : float
        Interval.
    panels : int
        Number of panels.
    deg : int, optional
        Polynomial degree per panel.
    """

    def __init__(self, fn, lo: float, hi: float, panels: int, deg: int = DEGREE):
        self.lo, self.hi, self.panels = float(lo), float(hi), int(panels)
        t, vinv = _cheb_setup(deg)
        self.width = (self.hi - self.lo) / self.panels
        left = self.lo + self.width * np.arange(self.panels)
        x = left[:, None] + 0.5 * self.width * (t[None, :] + 1.0)
        vals = np.asarray(fn(x.ravel()), dtype=float).reshape(x.shape)
        self.value_coeffs = vals @ vinv.T
        ic = C.chebint(self.value_coeffs, lbnd=-1, axis=1) * (0.5 * self.width)
        ends = C.chebval(1.0, ic.T)
        self.offsets = np.concatenate([[0.0], np.cumsum(ends)])
        self.int_coeffs = ic

    @property
    def total(self) -> float:
        return float(self.offsets[-1])

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        u = (x - self.lo) / self.width
        idx = np.clip(np.floor(u).astype(np.int64), 0, self.panels - 1)
        t = 2.0 * (u - idx) - 1.0
        return idx, t

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx, t = self._locate(x.ravel())
        out = self.offsets[idx] + clenshaw_rows(self.int_coeffs[idx], t)
        return out.reshape(x.shape)

    def integrand(self, x) -> np.ndarray:
        """Interpolated integrand."""
        x = np.asarray(x, dtype=float)
        idx, t = self._locate(x.ravel())
        return clenshaw_rows(self.value_coeffs[idx], t).reshape(x.shape)
