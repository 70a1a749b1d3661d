import math

import numpy as np
import pytest

from hardylab.constants import preset
from hardylab.fields import HalfSpaceField
from hardylab.l1 import (BoxRule, ConditionViolation, PowerField, SampleFunction, StepField,
                         _integrate, _sampled, concentration_trend, div_ineq_check,
                         random_sigma_draws, sample_library, step_inequality_check,
                         suite_fields, thmC_hypothesis_check, zero_sample)

LIB = sample_library(3, seed=0)


def _fd(f, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[i] = h
        g[..., i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.mark.parametrize("j", [0, 1, 2, 3, 25, 77])
def test_sample_gradient_fd(j):
    v = LIB[j]
    lo, hi = v.box()
    x = np.random.default_rng(j).uniform(lo, hi, (200, 3))
    _, g = v.value_and_grad(x)
    np.testing.assert_allclose(g, _fd(lambda y: v.value_and_grad(y)[0], x), rtol=1e-5, atol=1e-8)


def test_tensor_evaluation_matches_pointwise():
    rule = BoxRule(panels=1, order=3)
    for v in LIB[:8]:
        x, w, av, gn = _sampled(v, rule)
        val, grad = v.value_and_grad(x)
        np.testing.assert_allclose(av, np.abs(val), rtol=1e-13, atol=1e-300)
        np.testing.assert_allclose(gn, np.linalg.norm(grad, axis=-1), rtol=1e-12, atol=1e-14)


def test_library_support_inside_half_space():
    assert len(LIB) == 200
    for v in LIB:
        lo, _ = v.box()
        assert lo[0] >= 0.05 - 1e-12
    assert sample_library(3, seed=0)[150] == LIB[150]


def test_box_rule_oracle():
    # int (1 - t^2)^4 over [-1, 1] = 256/315 per axis
    v = SampleFunction((1.0, 0.0, 0.0), (0.5, 0.7, 0.9))
    val = _integrate(lambda x, a, g: (a,), v, BoxRule())[0]
    assert val == pytest.approx(0.5 * 0.7 * 0.9 * (256 / 315) ** 3, rel=1e-12)


def test_power_field_example():
    row = div_ineq_check(PowerField(2.0, 3), LIB[0])
    assert row.holds and row.lhs > 0


def test_zero_sample():
    row = div_ineq_check(PowerField(2.0, 3), zero_sample(3))
    assert (row.lhs, row.rhs) == (0.0, 0.0)
    r = thmC_hypothesis_check(HalfSpaceField.from_alpha(preset("corner", 1, 3)), zero_sample(3))
    assert (r.lhs, r.rhs, r.extras["ratio"]) == (0.0, 0.0, None)


def test_step_field_ratio_on_random_samples():
    F = StepField((2.0, 1.0), 2, 3)
    for v in LIB[20:70]:
        row = div_ineq_check(F, v)
        assert row.lhs <= row.rhs * (1 + 1e-6)


def test_step_field_divergence_fd():
    F = StepField((2.0, 1.0, -0.5), 3, 3)
    x = np.random.default_rng(2).uniform([0.2, -1, -1], [2, 1, 1], (50, 3))
    div = sum(_fd(lambda y: F.value(y)[..., i], x)[..., i] for i in range(3))
    np.testing.assert_allclose(F.divergence(x), div, rtol=1e-6)


def test_step_example_c2():
    row = step_inequality_check(2, (2.0, 1.0), LIB[0])
    assert row.extras["c_l"] == 4.0
    assert row.holds


def test_step_boundary_cases():
    assert step_inequality_check(2, (1.0, 0.0, 0.0), LIB[0]) is None
    with pytest.raises(ConditionViolation):
        step_inequality_check(2, (-2.0, 1.0), LIB[0])


def test_random_sigma_draws_satisfy_condition():
    from hardylab.constants import c_from_sigma
    for l, s in random_sigma_draws(3, 200, seed=1):
        assert s[l - 1] != 0 and c_from_sigma(s)[l - 1] > 0


def test_suite_fields_on_subset():
    for v in LIB[::20]:
        for name, F in suite_fields(3):
            if "quarter" in name:
                continue
            assert div_ineq_check(F, v, name=name).holds, name


def test_weighted_l1_ratio_finite_on_corner():
    phi = HalfSpaceField.from_alpha(preset("corner", 1, 3))
    ratios = [thmC_hypothesis_check(phi, v).extras["ratio"] for v in LIB[:30]]
    assert all(math.isfinite(r) and r > 0 for r in ratios)


def test_concentration_trend():
    grow = [t[3] for t in concentration_trend(HalfSpaceField.from_alpha((0, 0, 0)))]
    assert all(b > a for a, b in zip(grow, grow[1:]))
    assert grow[-1] > 4 * grow[0]
    tame = [t[3] for t in concentration_trend(HalfSpaceField.from_alpha((0, 0, -0.5)))]
    assert max(tame) < 2 * min(tame)
