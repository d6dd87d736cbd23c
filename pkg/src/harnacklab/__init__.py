"""Numerical laboratory for mixed-type equations with oscillating coefficients."""

__version__ = "0.1.0"
