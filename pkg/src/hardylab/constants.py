"""Constant families of the multi-term Hardy inequality on the half-space.

A vector ``alpha`` of reals generates the coefficients

    beta_1 = 1/4 - alpha_1**2
    beta_m = (alpha_{m-1} - 1/2)**2 - alpha_m**2,   m >= 2

of the inverse-square terms ``beta_m / |X_m|**2``, where ``|X_m|`` is the
Euclidean norm of the first ``m`` coordinates.  The exponents ``gamma`` of the
weight ``prod |X_m|**(-gamma_m)``, the rescaled exponents ``sigma`` and the
constants ``c_l`` of the weighted L1 inequalities are all derived from it.

Indices reported to the user (failing index, ``l`` in ``c_l``) are 1-based.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

#: Radicands in ``[-RADICAND_TOL, 0)`` are treated as exactly zero.
RADICAND_TOL = 1e-12
#: Absolute threshold below which sigma_l / c_l count as zero.
ZERO_TOL = 1e-12

PRESETS = ("corner", "all-quarter", "trailing-zero")


def _vec(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"{name} must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def alpha_to_beta(alpha: Sequence[float]) -> np.ndarray:
    a = _vec(alpha, "alpha")
    beta = np.empty_like(a)
    beta[0] = 0.25 - a[0] ** 2
    beta[1:] = (a[:-1] - 0.5) ** 2 - a[1:] ** 2
    return beta


def normalize_alpha(alpha: Sequence[float]) -> np.ndarray:
    """Nonpositive alpha generating the same beta as ``alpha``.

    Canonical choice: the nonpositive square root at every step.
    """
    a = _vec(alpha, "alpha")
    beta = alpha_to_beta(a)
    out = np.empty_like(a)
    out[0] = -abs(a[0])
    for m in range(1, a.size):
        radicand = (out[m - 1] - 0.5) ** 2 - beta[m]
        # (|a'_{m-1}| + 1/2)^2 >= (a_{m-1} - 1/2)^2, hence radicand >= a_m^2
        assert radicand >= a[m] ** 2 - 1e-12 * (1.0 + (out[m - 1] - 0.5) ** 2), (m, radicand)
        out[m] = -math.sqrt(max(radicand, 0.0))
    return out


@dataclass(frozen=True)
class Admissibility:
    """Outcome of the sequential admissibility test for a beta vector."""

    admissible: bool
    alpha: Optional[np.ndarray] = None
    failed_index: Optional[int] = None  # 1-based
    radicand: Optional[float] = None


def beta_admissible(beta: Sequence[float]) -> Admissibility:
    b = _vec(beta, "beta")
    alpha = np.empty_like(b)
    prev = None
    for m in range(b.size):
        radicand = 0.25 - b[0] if m == 0 else (prev - 0.5) ** 2 - b[m]
        if radicand < -RADICAND_TOL:
            return Admissibility(False, None, m + 1, float(radicand))
        alpha[m] = -math.sqrt(max(radicand, 0.0))
        prev = alpha[m]
    return Admissibility(True, alpha)


def gamma_from_alpha(alpha: Sequence[float]) -> np.ndarray:
    a = _vec(alpha, "alpha")
    gamma = np.empty_like(a)
    gamma[0] = a[0] - 0.5
    gamma[1:] = a[1:] - a[:-1] + 0.5
    return gamma


def alpha_from_gamma(gamma: Sequence[float]) -> np.ndarray:
    """Inverse of :func:`gamma_from_alpha`: alpha_m = sum_{j<=m} gamma_j - (m-2)/2."""
    g = _vec(gamma, "gamma")
    m = np.arange(1, g.size + 1)
    return np.cumsum(g) - (m - 2) / 2.0


def beta_from_gamma(gamma: Sequence[float]) -> np.ndarray:
    """beta directly in terms of gamma (expansion of div F - |F|^2)."""
    g = _vec(gamma, "gamma")
    m = np.arange(1, g.size + 1)
    partial = np.concatenate(([0.0], np.cumsum(g)[:-1]))
    return -g * (2 - m + g + 2 * partial)


def sobolev_exponent_factor(n: int) -> float:
    """2(n-1)/(n-2), the factor relating sigma to gamma."""
    if n < 3:
        raise ValueError(f"dimension n={n} must be >= 3")
    return 2.0 * (n - 1) / (n - 2)


def c_from_sigma(sigma: Sequence[float]) -> np.ndarray:
    """c_l = |sigma_1 + ... + sigma_l + l - 1|."""
    s = _vec(sigma, "sigma")
    l = np.arange(1, s.size + 1)
    return np.abs(np.cumsum(s) + l - 1)


def sobolev_condition(sigma: Sequence[float], c: Sequence[float]) -> np.ndarray:
    """Per-l flag: True where c_l != 0 or sigma_l == 0."""
    s = np.asarray(sigma, dtype=float)
    cc = np.asarray(c, dtype=float)
    return (np.abs(s) <= ZERO_TOL) | (cc > ZERO_TOL)


@dataclass(frozen=True)
class SigmaReport:
    sigma: np.ndarray
    c: np.ndarray
    c_closed: np.ndarray
    condition: np.ndarray  # per-l flags

    @property
    def holds(self) -> bool:
        return bool(np.all(self.condition))


def sigma_and_c(gamma: Sequence[float], n: int) -> SigmaReport:
    """sigma_m = -(2(n-1)/(n-2)) gamma_m together with c_l computed two ways.

    The closed form ``c_l = (2(n-1)/(n-2)) |alpha_l - (n-l)/(2(n-1))|`` is
    checked against the definition; a mismatch beyond 1e-12 relative raises.
    """
    g = _vec(gamma, "gamma")
    kappa = sobolev_exponent_factor(n)
    sigma = -kappa * g
    c = c_from_sigma(sigma)
    alpha = alpha_from_gamma(g)
    l = np.arange(1, g.size + 1)
    c_closed = kappa * np.abs(alpha - (n - l) / (2.0 * (n - 1)))
    if not np.allclose(c, c_closed, rtol=1e-12, atol=1e-12):
        raise ArithmeticError(f"c_l mismatch: {c} vs {c_closed}")
    return SigmaReport(sigma, c, c_closed, sobolev_condition(sigma, c))


def preset(kind: str, k: int, n: int) -> np.ndarray:
    """Named alpha choices.

    ``corner``: alpha_m = -m/2 for m < k, 0 otherwise, so that
    beta = (0, ..., 0, k^2/4, 1/4, ..., 1/4).
    ``all-quarter``: alpha = 0, beta all equal to 1/4 (k only range-checked).
    ``trailing-zero``: alpha_m = -m/2 for m < k and -(m-k)/2 for m >= k,
    so that beta = (0, ..., 0, k^2/4, 0, ..., 0).
    """
    if n < 1:
        raise ValueError(f"n={n} must be >= 1")
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range 1..{n}")
    m = np.arange(1, n + 1, dtype=float)
    if kind == "corner":
        return np.where(m < k, -m / 2.0, 0.0)
    if kind == "all-quarter":
        return np.zeros(n)
    if kind == "trailing-zero":
        return np.where(m < k, -m / 2.0, -(m - k) / 2.0)
    raise ValueError(f"unknown preset {kind!r}; expected one of {PRESETS}")
