import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hardylab.constants import (alpha_from_gamma, alpha_to_beta, beta_admissible, beta_from_gamma,
                                c_from_sigma, gamma_from_alpha, normalize_alpha, preset,
                                sigma_and_c)

reals = st.floats(-3, 3, allow_nan=False)
alphas = st.lists(reals, min_size=1, max_size=6)
nonpos = st.lists(st.floats(-2, 0, allow_nan=False), min_size=3, max_size=5)


def test_alpha_to_beta_examples():
    np.testing.assert_array_equal(alpha_to_beta([0, 0, 0]), [0.25, 0.25, 0.25])
    np.testing.assert_array_equal(alpha_to_beta([-0.5, 0, 0]), [0, 1, 0.25])
    np.testing.assert_array_equal(alpha_to_beta([-0.5, -1, -1.5]), [0, 0, 0])


def test_normalize_examples():
    np.testing.assert_array_equal(normalize_alpha([0, 0]), [0, 0])
    np.testing.assert_allclose(normalize_alpha([0.5, 0]), [-0.5, -1.0], rtol=0, atol=1e-15)
    np.testing.assert_allclose(normalize_alpha([1, 1]), [-1, -math.sqrt(3)], rtol=1e-15)


def test_admissibility_examples():
    np.testing.assert_array_equal(beta_admissible([0.25, 0.25]).alpha, [0, 0])
    bad = beta_admissible([0.26, 0])
    assert not bad.admissible and bad.failed_index == 1 and bad.alpha is None
    np.testing.assert_allclose(beta_admissible([0, 1, 0.25]).alpha, [-0.5, 0, 0], atol=1e-15)


def test_radicand_tolerance_band():
    assert beta_admissible([0.25 + 5e-13]).admissible
    assert not beta_admissible([0.25 + 1e-11]).admissible


def test_gamma_examples():
    np.testing.assert_array_equal(gamma_from_alpha([0, 0, 0]), [-0.5, 0.5, 0.5])
    np.testing.assert_array_equal(gamma_from_alpha([-0.5, -1]), [-1, 0])
    np.testing.assert_array_equal(gamma_from_alpha([-1, -2]), [-1.5, -0.5])


def test_sigma_and_c_examples():
    rep = sigma_and_c(gamma_from_alpha([0, 0, 0]), 3)
    np.testing.assert_array_equal(rep.sigma, [2, -2, -2])
    np.testing.assert_array_equal(rep.c, [2, 1, 0])
    np.testing.assert_allclose(rep.c_closed, [2, 1, 0], atol=1e-15)
    assert not rep.holds  # c_3 = 0 while sigma_3 != 0
    rep = sigma_and_c(gamma_from_alpha([0, 0, -0.25]), 3)
    assert rep.c[2] == pytest.approx(1.0) and rep.holds


def test_zero_sigma_is_exempt():
    # alpha = (-1/2, -1) has gamma_2 = 0; pad to n = 3 so sigma is defined
    rep = sigma_and_c(gamma_from_alpha([-0.5, -1.0, -1.5]), 3)
    assert rep.sigma[1] == 0
    assert rep.condition[1]


def test_sigma_rejects_low_dimension():
    with pytest.raises(ValueError):
        sigma_and_c([0.5, 0.5], 2)


def test_preset_examples():
    np.testing.assert_array_equal(preset("corner", 1, 3), [0, 0, 0])
    np.testing.assert_array_equal(preset("corner", 3, 3), [-0.5, -1, 0])
    np.testing.assert_array_equal(alpha_to_beta(preset("corner", 2, 4)), [0, 1, 0.25, 0.25])
    with pytest.raises(ValueError):
        preset("corner", 4, 3)
    with pytest.raises(ValueError):
        preset("nope", 1, 3)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_corner_preset_sums(n):
    for k in range(1, n + 1):
        b = alpha_to_beta(preset("corner", k, n))
        assert b[:k].sum() == k * k / 4
        assert np.all(b[k:] == 0.25)


@given(alphas)
def test_normalize_preserves_beta(a):
    na = normalize_alpha(a)
    assert np.all(na <= 0)
    np.testing.assert_allclose(alpha_to_beta(na), alpha_to_beta(a), rtol=1e-12, atol=1e-12)


@given(alphas)
def test_round_trip_admissible(a):
    na = normalize_alpha(a)
    adm = beta_admissible(alpha_to_beta(na))
    assert adm.admissible
    # backward stable always: the recovered alpha reproduces beta
    beta = alpha_to_beta(na)
    np.testing.assert_allclose(alpha_to_beta(adm.alpha), beta, rtol=1e-12, atol=1e-12)
    # forward accurate where the square-root recovery is well conditioned;
    # tiny nonzero |alpha_m| lose about sqrt(ulp) and pass the loss down
    if np.all((na == 0) | (np.abs(na) >= 1e-3)):
        np.testing.assert_allclose(adm.alpha, na, rtol=1e-9, atol=1e-9)


@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=6))
def test_monotone_cap(b):
    adm = beta_admissible(b)
    if adm.admissible:
        assert b[0] <= 0.25 + 1e-12
        for m in range(1, len(b)):
            assert b[m] <= (adm.alpha[m - 1] - 0.5) ** 2 + 1e-12
    else:
        assert 1 <= adm.failed_index <= len(b)


@given(alphas)
def test_gamma_alpha_inverse(a):
    np.testing.assert_allclose(alpha_from_gamma(gamma_from_alpha(a)), a, atol=1e-12)


@given(alphas)
def test_beta_from_gamma_matches(a):
    np.testing.assert_allclose(beta_from_gamma(gamma_from_alpha(a)), alpha_to_beta(a),
                               rtol=1e-12, atol=1e-12)


@settings(max_examples=300)
@given(nonpos)
def test_c_closed_form_agrees(a):
    n = len(a)
    rep = sigma_and_c(gamma_from_alpha(a), n)
    np.testing.assert_allclose(rep.c, rep.c_closed, rtol=1e-12, atol=1e-12)
    np.testing.assert_array_equal(rep.c, c_from_sigma(rep.sigma))
