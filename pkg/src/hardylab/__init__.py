"""Numerical checks of multi-term Hardy inequalities with prefix-norm weights."""

__version__ = "0.1.0"
