import math

import numpy as np
import pytest

from hardylab.constants import alpha_to_beta, preset
from hardylab.fem import (BoxMesh, SolverStagnation, assemble, eigen_study, levels, min_rayleigh,
                          psd_check, quarter_psd_check, rayleigh, supercritical_trend)


def test_no_node_on_singular_set():
    mesh = BoxMesh(n=3, N=6, grading=2.0, graded_axes=3)
    pts = mesh.interior_points()
    assert np.all(pts[:, 0] > 0)
    assert np.all(np.linalg.norm(pts[:, :2], axis=1) > 0)
    q = BoxMesh(n=3, N=6, positive=2)
    assert np.all(q.interior_points()[:, :2] > 0)


def test_stiffness_row_sums_vanish_inside():
    mesh = BoxMesh(n=2, L=1.0, N=8)
    K = assemble(mesh, "stiffness").matrix.toarray()
    shape = tuple(s - 2 for s in mesh.shape)
    idx = np.arange(K.shape[0]).reshape(shape)
    deep = idx[1:-1, 1:-1].ravel()  # rows whose stencil stays interior
    np.testing.assert_allclose(K[deep].sum(axis=1), 0, atol=1e-12)


@pytest.mark.parametrize("which,params", [("stiffness", None), ("potential", (0.25, 0.25, 0.25)),
                                          ("weight", 2), ("quarter-potential", 2), ("mass", None)])
def test_exact_symmetry(which, params):
    mesh = BoxMesh(n=3, N=4, positive=2 if which == "quarter-potential" else 1)
    A = assemble(mesh, which, params).matrix
    assert abs(A - A.T).max() == 0


def test_weight_mass_positive_definite():
    W = assemble(BoxMesh(n=3, N=4), "weight", 1).matrix.toarray()
    np.linalg.cholesky(W)


def test_dirichlet_oracle():
    # unit cube (0,1)^3: lowest Dirichlet eigenvalue 3 pi^2
    mesh = BoxMesh(n=3, L=1.0, N=12, positive=3)
    res = min_rayleigh(assemble(mesh, "stiffness"), assemble(mesh, "mass"))
    assert res.value == pytest.approx(3 * math.pi**2, rel=0.05)
    assert res.residual <= 1e-8


def test_two_dimensional_psd():
    mesh = BoxMesh(n=2, N=12, grading=2.0, graded_axes=2)
    assert psd_check(mesh, (0.25, 0.0)).min_eig >= -1e-8


def test_psd_examples():
    mesh = BoxMesh(n=3, N=8, grading=2.0, graded_axes=3)
    assert psd_check(mesh, alpha_to_beta(preset("corner", 1, 3))).nonnegative
    assert psd_check(mesh, (0.0, 0.0, 0.0)).min_eig >= 0
    assert quarter_psd_check(2, 3, BoxMesh(n=3, N=8, positive=2)).nonnegative


def test_quarter_k1_matches_half_space():
    mesh = BoxMesh(n=3, N=6)
    a = quarter_psd_check(1, 3, mesh).min_eig
    b = psd_check(mesh, (0.25, 0.0, 0.0)).min_eig
    assert a == pytest.approx(b, abs=1e-10)


def test_conforming_lower_bound_random_vectors():
    rng = np.random.default_rng(0)
    mesh = BoxMesh(n=3, N=6, grading=2.0, graded_axes=3)
    K = assemble(mesh, "stiffness").matrix
    for k in (1, 3):
        W = assemble(mesh, "weight", k).matrix
        for _ in range(100):
            v = rng.standard_normal(K.shape[0])
            assert rayleigh(K, W, v) >= k * k / 4 - 1e-8
    beta = alpha_to_beta(np.zeros(3))
    A = K - assemble(mesh, "potential", beta).matrix
    for _ in range(100):
        v = rng.standard_normal(K.shape[0])
        assert v @ (A @ v) >= -1e-8 * (v @ v)


def test_eigen_study_squeeze_k1():
    rows = eigen_study(1, finest=12, refine=2)
    vals = [r.value for r in rows]
    assert all(v >= 0.25 - 1e-8 for v in vals)
    assert vals[1] <= vals[0] + 1e-6
    assert all(r.residual <= 1e-8 for r in rows)


def test_monotone_in_box_size():
    # uniform meshes at the same spacing are nested as L doubles
    vals = []
    for L, N in ((1.0, 3), (2.0, 6), (4.0, 12)):
        mesh = BoxMesh(n=3, L=L, N=N)
        vals.append(min_rayleigh(assemble(mesh, "stiffness"), assemble(mesh, "weight", 1),
                                 shift=0.25).value)
    assert vals[0] >= vals[1] - 1e-6 >= vals[2] - 2e-6


def test_supercritical_trend_decreases():
    out = supercritical_trend((0.25, 0.25, 0.26), pairs=((2.0, 4), (4.0, 8)))
    assert out[1][2] < out[0][2]


def test_levels():
    assert levels(3, 24) == [6, 12, 24]
    with pytest.raises(ValueError):
        levels(4, 12)


def test_stagnation_reported():
    mesh = BoxMesh(n=2, N=6)
    with pytest.raises(SolverStagnation):
        min_rayleigh(assemble(mesh, "stiffness"), assemble(mesh, "mass"), tol=1e-30, maxiter=3)


def test_min_rayleigh_bit_reproducible_and_leaves_global_rng():
    mesh = BoxMesh(n=2, N=8)
    A, B = assemble(mesh, "stiffness"), assemble(mesh, "mass")
    np.random.seed(7)
    before = np.random.get_state()[1].copy()
    first = min_rayleigh(A, B, tol=1e-8)
    assert np.array_equal(np.random.get_state()[1], before)
    again = min_rayleigh(A, B, tol=1e-8)
    assert first.value == again.value
