"""Conforming Q1 finite elements on truncated half/quarter-space boxes.

The box is ``(0, L)^p x (-L, L)^(n-p)`` with ``p = 1`` (half-space) or ``p = k``
(quarter-space).  Dirichlet conditions on the whole boundary keep only interior
nodes, so every discrete function extends by zero to an admissible test
function and all discrete Rayleigh quotients are upper bounds for the
continuous infima.  Mass-type terms use 2-point Gauss per axis; the Gauss
points are interior to cells and never meet a singular set.

Axes may be graded toward 0 with nodes ``L (j/N)^grading``; grading keeps the
mesh conforming and nested under ``N -> 2N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pyamg
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

ROLES = ("stiffness", "potential", "quarter-potential", "weight", "mass")


class SolverStagnation(RuntimeError):
    """Inner linear solve or outer iteration failed to converge."""


@dataclass(frozen=True)
class BoxMesh:
    """Tensor mesh with N cells per unit segment (0, L) of every axis.

    ``positive`` leading axes span (0, L); the others span (-L, L) with 2N
    cells.  The first ``graded_axes`` axes are graded toward 0 (symmetric
    axes from both sides).
    """

    n: int = 3
    L: float = 4.0
    N: int = 24
    positive: int = 1
    grading: float = 1.0
    graded_axes: int = 1

    def __post_init__(self):
        if self.n < 1 or not 1 <= self.positive <= self.n:
            raise ValueError(f"need 1 <= positive <= n, got positive={self.positive}, n={self.n}")
        if self.N < 2:
            raise ValueError("need at least 2 cells per half-axis")
        if not self.L > 0 or not self.grading >= 1:
            raise ValueError("L must be positive and grading >= 1")
        if not 0 <= self.graded_axes <= self.n:
            raise ValueError("graded_axes out of range")

    @property
    def h(self) -> float:
        return self.L / self.N

    def axes(self) -> list[np.ndarray]:
        out = []
        t = np.arange(self.N + 1) / self.N
        for a in range(self.n):
            p = self.grading if a < self.graded_axes else 1.0
            half = self.L * t**p
            half[-1] = self.L
            if a < self.positive:
                out.append(half)
            else:
                out.append(np.concatenate((-half[::-1], half[1:])))
        return out

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes())

    def interior(self) -> np.ndarray:
        """Flat indices of interior nodes."""
        shape = self.shape
        grids = np.meshgrid(*[np.arange(s) for s in shape], indexing="ij")
        mask = np.ones(shape, dtype=bool)
        for g, s in zip(grids, shape):
            mask &= (g > 0) & (g < s - 1)
        return np.flatnonzero(mask.ravel())

    def interior_points(self) -> np.ndarray:
        grid = np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1).reshape(-1, self.n)
        return grid[self.interior()]


@dataclass(frozen=True)
class SymmetricSparseForm:
    matrix: sp.csr_matrix
    role: str
    params: tuple = ()

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


def _reference(n: int):
    g = np.array([0.5 - 0.5 / math.sqrt(3), 0.5 + 0.5 / math.sqrt(3)])
    corners = np.array(np.meshgrid(*[[0, 1]] * n, indexing="ij")).reshape(n, -1).T
    gps = np.array(np.meshgrid(*[g] * n, indexing="ij")).reshape(n, -1).T
    F = np.where(corners[None] == 1, gps[:, None], 1 - gps[:, None])  # (gauss, basis, axis)
    vals = F.prod(axis=2)
    dref = np.empty_like(F)
    for a in range(n):
        f = F.copy()
        f[:, :, a] = np.where(corners[None, :, a] == 1, 1.0, -1.0)
        dref[:, :, a] = f.prod(axis=2)
    return corners, gps, vals, dref


def _weight_fn(mesh: BoxMesh, role: str, params):
    if role == "mass":
        return lambda x: np.ones(x.shape[:-1])
    if role == "weight":
        k = int(params)
        if not 1 <= k <= mesh.n:
            raise ValueError(f"weight index k={k} outside 1..{mesh.n}")
        return lambda x: 1.0 / np.sum(x[..., :k] ** 2, axis=-1)
    if role == "potential":
        beta = np.asarray(params, dtype=float)
        if beta.shape != (mesh.n,):
            raise ValueError(f"beta must have length {mesh.n}")
        return lambda x: np.sum(beta / np.cumsum(x**2, axis=-1), axis=-1)
    if role == "quarter-potential":
        k = int(params)
        if not 1 <= k <= mesh.positive:
            raise ValueError("quarter-space potential needs k <= number of positive axes")
        return lambda x: 0.25 * np.sum(1.0 / x[..., :k] ** 2, axis=-1)
    raise ValueError(f"unknown role {role!r}; expected one of {ROLES}")


def _symmetrize(A: sp.spmatrix) -> sp.csr_matrix:
    # mirror the upper triangle: exact symmetry regardless of summation order
    up = sp.triu(A, k=1)
    out = (sp.diags(A.diagonal()) + up + up.T).tocsr()
    out.sort_indices()
    return out


def assemble(mesh: BoxMesh, which: str, params=None) -> SymmetricSparseForm:
    """Assemble one quadratic form on the interior nodes of ``mesh``.

    ``which``: ``stiffness``; ``potential`` (params = beta, V = sum beta_m/|X_m|^2);
    ``quarter-potential`` (params = k, V = (1/4) sum_{i<=k} 1/x_i^2);
    ``weight`` (params = k, 1/|X_k|^2); ``mass``.
    """
    n = mesh.n
    axes = mesh.axes()
    corners, gps, vals, dref = _reference(n)
    cells = [len(a) - 1 for a in axes]
    idx = np.array(np.meshgrid(*[np.arange(c) for c in cells], indexing="ij")).reshape(n, -1).T
    hs = np.stack([np.diff(axes[a])[idx[:, a]] for a in range(n)], axis=1)
    lo = np.stack([axes[a][idx[:, a]] for a in range(n)], axis=1)
    vol = hs.prod(axis=1) * 0.5**n
    if which == "stiffness":
        local = np.einsum("gia,gja->aij", dref, dref).reshape(n, -1)
        data = (vol[:, None] / hs**2) @ local
    else:
        w = _weight_fn(mesh, which, params)
        xg = lo[:, None, :] + gps[None] * hs[:, None, :]
        if which != "mass" and np.any(np.abs(xg[..., 0]) == 0):
            raise AssertionError("quadrature node on a singular set")
        wt = w(xg)
        if not np.all(np.isfinite(wt)):
            raise AssertionError("non-finite weight at a quadrature node")
        phi = np.einsum("gi,gj->gij", vals, vals).reshape(len(gps), -1)
        data = (wt * vol[:, None]) @ phi
    shape = tuple(c + 1 for c in cells)
    conn = np.stack([np.ravel_multi_index(tuple((idx + c).T), shape) for c in corners], axis=1)
    nb = len(corners)
    rows = np.repeat(conn, nb, axis=1).ravel()
    cols = np.tile(conn, (1, nb)).ravel()
    nn = int(np.prod(shape))
    full = sp.csr_matrix((data.ravel(), (rows, cols)), shape=(nn, nn))
    inner = mesh.interior()
    A = _symmetrize(full[inner][:, inner])
    if params is None:
        ptuple = ()
    elif np.ndim(params) == 0:
        ptuple = (params,)
    else:
        ptuple = tuple(float(p) for p in params)
    return SymmetricSparseForm(A, which, ptuple)


@dataclass
class EigenResult:
    value: float
    vector: np.ndarray = field(repr=False)
    residual: float
    iterations: int
    inner_iterations: int = 0
    shift: float = 0.0


def _matrix(A):
    return A.matrix if isinstance(A, SymmetricSparseForm) else sp.csr_matrix(A)


def _amg(S):
    """Smoothed-aggregation hierarchy with a fixed seed.

    pyamg estimates smoother weights from a random start vector drawn from
    numpy's global generator; seed it locally so runs are bit-reproducible.
    """
    state = np.random.get_state()
    np.random.seed(0)
    try:
        return pyamg.smoothed_aggregation_solver(S, max_coarse=500)
    finally:
        np.random.set_state(state)


def min_rayleigh(A, B, tol: float = 1e-9, shift: float = 0.0, maxiter: int = 300,
                 inner_rtol: float = 1e-11, ritz: int = 3) -> EigenResult:
    """Smallest lambda of A v = lambda B v by shifted inverse iteration.

    ``shift`` must lie strictly below the smallest eigenvalue so that
    ``A - shift B`` is positive definite; inner solves use CG preconditioned
    by smoothed-aggregation AMG.  Each step does a Rayleigh-Ritz projection
    on the new iterate and the last ``ritz`` Ritz vectors.  The relative
    residual is ``|A v - lambda B v| / (|A v| + |lambda| |B v|)``.
    """
    A, B = _matrix(A), _matrix(B)
    S = (A - shift * B).tocsr()
    ml = _amg(S)
    prec = ml.aspreconditioner()
    v = np.ones(A.shape[0])
    v /= math.sqrt(v @ (B @ v))
    history: list[np.ndarray] = []
    inner_total = 0
    lam = res = math.nan
    for it in range(1, maxiter + 1):
        counter = [0]

        def cb(_):
            counter[0] += 1

        rhs = B @ v
        guess = v / (lam - shift) if math.isfinite(lam) and lam > shift else v
        y, info = spla.cg(S, rhs, x0=guess, rtol=inner_rtol, M=prec, maxiter=1000, callback=cb)
        inner_total += counter[0]
        if info != 0:
            raise SolverStagnation(f"inner CG did not converge (info={info}) at outer step {it}")
        V = np.column_stack(history[-ritz:] + [y]) if history else y[:, None]
        Q, _ = np.linalg.qr(V)
        w, Z = sla.eigh(Q.T @ (A @ Q), Q.T @ (B @ Q))
        v = Q @ Z[:, 0]
        v /= math.sqrt(v @ (B @ v))
        if v.sum() < 0:
            v = -v
        lam = float(w[0])
        history.append(v.copy())
        Av, Bv = A @ v, B @ v
        res = float(np.linalg.norm(Av - lam * Bv) / (np.linalg.norm(Av) + abs(lam) * np.linalg.norm(Bv)))
        if res < tol:
            return EigenResult(lam, v, res, it, inner_total, shift)
    raise SolverStagnation(f"no convergence after {maxiter} steps (residual {res:.3e})")


def rayleigh(A, B, v) -> float:
    A, B = _matrix(A), _matrix(B)
    return float(v @ (A @ v)) / float(v @ (B @ v))


@dataclass
class PSDResult:
    min_eig: float               # smallest lambda of (K - P) v = lambda B v
    metric: str                  # what B is
    eigen: EigenResult = field(repr=False)

    @property
    def nonnegative(self) -> bool:
        return self.min_eig >= -1e-8


def _psd(K: SymmetricSparseForm, P: Optional[SymmetricSparseForm], B: SymmetricSparseForm,
         tol: float) -> PSDResult:
    A = K.matrix - (P.matrix if P is not None else 0)
    if P is None:
        shift = -1.0  # K is positive definite
    else:
        # K - P >= -P >= -B (B dominates P), so lambda >= -1
        shift = -1.0 - 1e-3
    eig = min_rayleigh(A, B.matrix, tol=tol, shift=shift)
    return PSDResult(eig.value, B.role, eig)


def psd_check(mesh: BoxMesh, beta: Sequence[float], tol: float = 1e-9) -> PSDResult:
    """Smallest generalized eigenvalue of stiffness - potential(beta).

    The metric is the mass of |V|-type: sum |beta_m| / |X_m|^2 (the plain mass
    matrix when beta = 0), which makes the value scale-free and gives the
    a-priori lower bound -1 used as the shift.
    """
    beta = np.asarray(beta, dtype=float)
    K = assemble(mesh, "stiffness")
    if np.all(beta == 0):
        return _psd(K, None, assemble(mesh, "mass"), tol)
    P = assemble(mesh, "potential", beta)
    B = P if np.all(beta >= 0) else assemble(mesh, "potential", np.abs(beta))
    return _psd(K, P, B, tol)


def quarter_psd_check(k: int, n: int, mesh: Optional[BoxMesh] = None, scale: float = 1.0,
                      tol: float = 1e-9) -> PSDResult:
    """As :func:`psd_check` for (scale/4) sum_{i<=k} 1/x_i^2 on the quarter-space box."""
    mesh = mesh or BoxMesh(n=n, positive=k, N=12)
    if mesh.n != n or mesh.positive < k:
        raise ValueError("mesh does not match the quarter-space (k, n)")
    K = assemble(mesh, "stiffness")
    B = assemble(mesh, "quarter-potential", k)
    P = B if scale == 1.0 else SymmetricSparseForm(scale * B.matrix, B.role, B.params)
    if scale > 1.0:
        # K - scale B >= -scale B
        A = K.matrix - P.matrix
        eig = min_rayleigh(A, B.matrix, tol=tol, shift=-scale - 1e-3)
        return PSDResult(eig.value, B.role, eig)
    return _psd(K, P, B, tol)


# --- studies ---------------------------------------------------------------

def levels(refine: int, finest: int = 24) -> list[int]:
    """Cells per half-axis for ``refine`` nested levels ending at ``finest``."""
    if refine < 1:
        raise ValueError("refine must be >= 1")
    if finest % 2 ** (refine - 1) or finest // 2 ** (refine - 1) < 2:
        raise ValueError(f"finest={finest} cannot be halved {refine - 1} times")
    return [finest // 2 ** (refine - 1 - i) for i in range(refine)]


def weight_mesh(k: int, n: int, L: float, N: int, grading: float) -> BoxMesh:
    return BoxMesh(n=n, L=L, N=N, positive=1, grading=grading, graded_axes=k)


@dataclass
class EigenRow:
    n: int
    k: int
    L: float
    h: float
    N: int
    value: float
    residual: float
    iterations: int
    unknowns: int

    def row(self) -> dict:
        return {"n": self.n, "k": self.k, "L": self.L, "h": self.h, "lambda": self.value,
                "residual": self.residual, "iterations": self.iterations,
                "unknowns": self.unknowns}


def eigen_study(k: int, n: int = 3, L: float = 4.0, refine: int = 3, finest: int = 24,
                grading: float = 2.0, tol: float = 1e-9) -> list[EigenRow]:
    """min int|grad u|^2 / int u^2/|X_k|^2 over nested meshes (shift k^2/4)."""
    rows = []
    for N in levels(refine, finest):
        mesh = weight_mesh(k, n, L, N, grading)
        K = assemble(mesh, "stiffness")
        W = assemble(mesh, "weight", k)
        res = min_rayleigh(K, W, tol=tol, shift=k * k / 4.0)
        rows.append(EigenRow(n, k, L, mesh.h, N, res.value, res.residual, res.iterations,
                             K.dimension))
    return rows


def supercritical_trend(beta: Sequence[float], n: int = 3, pairs=((2.0, 6), (4.0, 12), (8.0, 24)),
                        grading: float = 2.0) -> list[tuple[float, int, float]]:
    """psd_check over growing (L, N); returns (L, N, min_eig) triples."""
    out = []
    for L, N in pairs:
        mesh = BoxMesh(n=n, L=L, N=N, positive=1, grading=grading, graded_axes=n)
        out.append((L, N, psd_check(mesh, beta).min_eig))
    return out
