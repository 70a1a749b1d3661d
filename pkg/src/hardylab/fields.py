"""Weights, drift fields and the singular potentials they induce.

For a weight ``phi > 0`` the drift is ``F = -grad(phi)/phi`` and

    div F - |F|^2 = -Laplacian(phi)/phi =: V

is the potential in the Hardy-type inequality ``int |grad u|^2 >= int V u^2``.

Two families are provided:

* :class:`HalfSpaceField` -- ``phi = prod_m |X_m|**(-gamma_m)`` on ``x_1 > 0``,
  with ``V = sum_m beta_m / |X_m|^2``;
* :class:`QuarterSpaceField` -- ``phi = sqrt(x_1 ... x_k)`` on
  ``x_1, ..., x_k > 0``, with ``V = (1/4) sum_{i<=k} 1/x_i^2``.

All methods accept a single point of shape ``(n,)`` or a batch ``(..., n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constants import alpha_from_gamma, alpha_to_beta, gamma_from_alpha

#: Points closer than this to a singular hyperplane are rejected.
BOUNDARY_TOL = 1e-12


class DomainError(ValueError):
    """A point lies on (or within BOUNDARY_TOL of) a singular set."""


def prefix_norms(x: np.ndarray) -> np.ndarray:
    """|X_m| = sqrt(x_1^2 + ... + x_m^2) for m = 1..n along the last axis."""
    x = np.asarray(x, dtype=float)
    out = np.square(x)
    # column loop: cumsum along a short trailing axis is far slower
    for i in range(1, x.shape[-1]):
        out[..., i] += out[..., i - 1]
    return np.sqrt(out, out=out)


def _points(x, n: int) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1:] != (n,):
        raise ValueError(f"points must have trailing dimension {n}, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class HalfSpaceField:
    gamma: np.ndarray
    beta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim != 1 or g.size < 1:
            raise ValueError("gamma must be a non-empty vector")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "beta", alpha_to_beta(alpha_from_gamma(g)))

    @classmethod
    def from_alpha(cls, alpha: Sequence[float]) -> "HalfSpaceField":
        return cls(gamma_from_alpha(alpha))

    @property
    def n(self) -> int:
        return self.gamma.size

    def _check(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = _points(x, self.n)
        if np.any(x[..., 0] <= BOUNDARY_TOL):
            raise DomainError("half-space point with x_1 <= 0 (or within tolerance)")
        return x, prefix_norms(x)

    def phi(self, x) -> np.ndarray:
        _, r = self._check(x)
        return np.exp(-np.sum(self.gamma * np.log(r), axis=-1))

    def drift(self, x) -> np.ndarray:
        """F = sum_m gamma_m X_m / |X_m|^2."""
        x, r = self._check(x)
        coef = self.gamma / r**2  # (..., n)
        # component i collects the terms with m >= i
        for i in range(self.n - 2, -1, -1):
            coef[..., i] += coef[..., i + 1]
        return x * coef

    def divergence(self, x) -> np.ndarray:
        """div F = sum_m gamma_m (m-2) / |X_m|^2."""
        _, r = self._check(x)
        m = np.arange(1, self.n + 1)
        return np.sum(self.gamma * (m - 2) / r**2, axis=-1)

    def div_minus_sq(self, x) -> np.ndarray:
        """div F - |F|^2 from the closed forms.

        Uses div(X_m/|X_m|^2) = (m-2)/|X_m|^2 and
        X_m.X_j / (|X_m|^2 |X_j|^2) = 1/|X_m|^2 for j < m.
        """
        _, r = self._check(x)
        g = self.gamma
        m = np.arange(1, self.n + 1)
        inv = 1.0 / r**2
        div = np.sum(g * (m - 2) * inv, axis=-1)
        # cross terms: 2 sum_{j<m} g_m g_j / |X_m|^2
        earlier = np.cumsum(g) - g
        sq = np.sum(g**2 * inv, axis=-1) + 2.0 * np.sum(g * earlier * inv, axis=-1)
        return div - sq

    def potential_terms(self, x) -> np.ndarray:
        _, r = self._check(x)
        return self.beta / r**2

    def potential(self, x) -> np.ndarray:
        return np.sum(self.potential_terms(x), axis=-1)

    def identity_residual(self, x) -> np.ndarray:
        terms = self.potential_terms(x)
        lhs = self.div_minus_sq(x)
        return np.abs(lhs - terms.sum(axis=-1)) / (1.0 + np.abs(terms).sum(axis=-1))


@dataclass(frozen=True)
class QuarterSpaceField:
    k: int
    n: int

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")

    @property
    def beta(self) -> np.ndarray:
        """Coefficient 1/4 on each 1/x_i^2, i <= k."""
        return np.full(self.k, 0.25)

    def _check(self, x) -> np.ndarray:
        x = _points(x, self.n)
        if np.any(x[..., : self.k] <= BOUNDARY_TOL):
            raise DomainError(f"quarter-space point with some x_i <= 0, i <= {self.k}")
        return x

    def phi(self, x) -> np.ndarray:
        x = self._check(x)
        return np.sqrt(np.prod(x[..., : self.k], axis=-1))

    def drift(self, x) -> np.ndarray:
        x = self._check(x)
        out = np.zeros_like(x)
        out[..., : self.k] = -0.5 / x[..., : self.k]
        return out

    def divergence(self, x) -> np.ndarray:
        x = self._check(x)
        return np.sum(0.5 / x[..., : self.k] ** 2, axis=-1)

    def div_minus_sq(self, x) -> np.ndarray:
        x = self._check(x)
        inv = 1.0 / x[..., : self.k] ** 2
        # div F = sum 1/(2 x_i^2), |F|^2 = sum 1/(4 x_i^2)
        return np.sum(0.5 * inv, axis=-1) - np.sum(0.25 * inv, axis=-1)

    def potential_terms(self, x) -> np.ndarray:
        x = self._check(x)
        return 0.25 / x[..., : self.k] ** 2

    def potential(self, x) -> np.ndarray:
        return np.sum(self.potential_terms(x), axis=-1)

    def identity_residual(self, x) -> np.ndarray:
        terms = self.potential_terms(x)
        lhs = self.div_minus_sq(x)
        return np.abs(lhs - terms.sum(axis=-1)) / (1.0 + terms.sum(axis=-1))


def residual_suite(n: int, samples: int, seed: int, alpha_range=(-2.0, 0.0),
                   coord_range=(0.1, 10.0)) -> np.ndarray:
    """Identity residuals for ``samples`` seeded (alpha, x) draws in dimension n."""
    rng = np.random.default_rng(seed)
    alphas = rng.uniform(*alpha_range, size=(samples, n))
    xs = rng.uniform(*coord_range, size=(samples, n))
    out = np.empty(samples)
    for i in range(samples):
        out[i] = HalfSpaceField.from_alpha(alphas[i]).identity_residual(xs[i])
    return out


def quarter_residual_suite(k: int, n: int, samples: int, seed: int,
                           coord_range=(0.1, 10.0)) -> np.ndarray:
    rng = np.random.default_rng(seed)
    xs = rng.uniform(*coord_range, size=(samples, n))
    return QuarterSpaceField(k, n).identity_residual(xs)
