"""Acceptance criteria 1-8, each printing one PASS/FAIL line.

Suites run through the CLI's execution path so that criterion 8 compares
the exact report bytes a user would get.
"""
import time

import numpy as np
import pytest

from hardylab.cli import execute, parse_config
from hardylab.constants import (alpha_to_beta, beta_admissible, normalize_alpha, preset,
                                sigma_and_c, gamma_from_alpha)

_FIRST: dict = {}


def suite(*argv):
    key = tuple(argv)
    t0 = time.perf_counter()
    res = execute(parse_config(list(argv)))
    elapsed = time.perf_counter() - t0
    _FIRST.setdefault(key, res.text)
    return res, elapsed


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


def test_criterion_1_identity(report):
    half, t1 = suite("identity", "--n", "2,3,4,5", "--samples", "1000")
    quarter, t2 = suite("identity", "--quarter", "--n", "3", "--k", "1,2,3", "--samples", "1000")
    worst = max(half.verdict["max_residual"], quarter.verdict["max_residual"])
    runtime = t1 + t2
    ok = worst <= 1e-10 and runtime < 5
    assert report(1, ok, f"max residual {worst:.2e} (<= 1e-10), runtime {runtime:.2f} s (< 5 s)")


def test_criterion_2_constant_calculus(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(10_000):
        n = int(rng.integers(1, 6))
        na = normalize_alpha(rng.uniform(-2, 2, n))
        back = beta_admissible(alpha_to_beta(na))
        err = np.max(np.abs(back.alpha - na) / np.maximum(np.abs(na), 1.0)) if back.admissible else np.inf
        worst = max(worst, float(err))
    corner_ok = True
    for n in range(1, 7):
        for k in range(1, n + 1):
            b = alpha_to_beta(preset("corner", k, n))
            expect = np.array([0.0] * (k - 1) + [k * k / 4] + [0.25] * (n - k))
            corner_ok &= bool(np.array_equal(b, expect))
    c_worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(3, 6))
        rep = sigma_and_c(gamma_from_alpha(rng.uniform(-2, 0, n)), n)
        c_worst = max(c_worst, float(np.max(np.abs(rep.c - rep.c_closed) / np.maximum(rep.c, 1.0))))
    runtime = time.perf_counter() - t0
    ok = worst <= 1e-14 and corner_ok and c_worst <= 1e-12 and runtime < 1
    assert report(2, ok, f"round-trip worst {worst:.2e} (<= 1e-14), corner presets exact {corner_ok}, "
                         f"c_l worst {c_worst:.1e} (<= 1e-12), runtime {runtime:.2f} s (< 1 s)")


def test_criterion_3_sharpness_q1(report):
    res, runtime = suite("sharpness", "--q", "1", "--ks", "1e2,1e3,1e4,1e5", "--beta-tail", "0.25,0.25")
    v = res.verdict
    vals = [r["value"] for r in res.rows]
    ratio, expect = v["ln_growth_ratio"], v["ln_growth_expected"]
    growth_ok = abs(ratio / expect - 1) <= 0.15
    ok = (v["decreasing"] and min(vals) >= 0.25 - 1e-3 and vals[-1] <= 0.30 and growth_ok
          and runtime < 60)
    assert report(3, ok, f"Q1 = {[round(float(x), 5) for x in vals]}, decreasing {v['decreasing']}, "
                         f"floor {min(vals) >= 0.25 - 1e-3}, final {vals[-1]:.4f} (<= 0.30), "
                         f"den ratio {ratio:.3f} vs {expect:.3f} (15%), runtime {runtime:.1f} s (< 60 s)")


def test_criterion_4_sharpness_q2(report):
    details, ok, runtime = [], True, 0.0
    for a1, target in ((0.0, 0.25), (-0.5, 1.0)):
        res, t = suite("sharpness", "--q", "2", "--alpha", f"{a1},0,0", "--ks", "1e2,1e3,1e4,1e5")
        runtime += t
        v = res.verdict
        vals = [r["value"] for r in res.rows]
        gap = abs(vals[-1] - target) / target
        tail = v["tail_ratio_max"]
        this = (v["decreasing"] and min(vals) >= target - 1e-3 and gap <= 0.25 and tail <= 1.1)
        ok &= this
        details.append(f"alpha1={a1:g}: Q2 = {[round(float(x), 5) for x in vals]}, decreasing {v['decreasing']}, "
                       f"final gap {gap:.1%} (<= 25%), tail ratio {tail:.4f} (<= 1.1)")
    ok &= runtime < 120
    assert report(4, ok, "; ".join(details) + f"; runtime {runtime:.1f} s (< 120 s)")


def test_criterion_5_eigen_squeeze(report):
    details, ok, runtime = [], True, 0.0
    for k in (1, 3):
        res, t = suite("eigen", "--k", str(k), "--n", "3", "--refine", "3", *(["--psd"] if k == 1 else []))
        runtime += t
        v = res.verdict
        lam = [r["lambda"] for r in res.rows if r["study"] == "eigen"]
        this = v["lower_bound_ok"] and v["nonincreasing"] and v["final_gap"] <= 0.60
        ok &= this
        details.append(f"k={k}: lambda = {[round(float(x), 6) for x in lam]}, gap {v['final_gap']:.1%} (<= 60%)")
        if "psd_ok" in v:
            psd = {r["study"]: r["lambda"] for r in res.rows if r["study"] != "eigen"}
            ok &= v["psd_ok"]
            details.append("; ".join(f"{name} {val:.4f}" for name, val in psd.items()) + " (>= -1e-8)")
    ok &= runtime < 240
    assert report(5, ok, "; ".join(details) + f"; runtime {runtime:.1f} s (< 4 min)")


def test_criterion_6_sobolev_null(report):
    null, t1 = suite("sobolev-null", "--alpha", "0,0,0", "--eps", "0.2,0.1,0.05,0.025")
    comp, t2 = suite("sobolev-null", "--alpha", "0,0,-0.25", "--eps", "0.2,0.1,0.05,0.025")
    slope = null.verdict["slope"]
    mm = comp.verdict["min_over_max"]
    runtime = t1 + t2
    ok = (null.verdict["decreasing"] and abs(slope - 1 / 3) <= 0.12 and mm >= 0.5
          and comp.verdict["floor_ok"] and runtime < 90)
    vals = [round(float(r["value"]), 4) for r in null.rows]
    assert report(6, ok, f"quotient {vals}, decreasing {null.verdict['decreasing']}, slope {slope:.4f} "
                         f"(1/3 +- 0.12), companion min/max {mm:.3f} (>= 0.5), runtime {runtime:.1f} s (< 90 s)")


def test_criterion_7_l1_suite(report):
    res, runtime = suite("l1", "--n", "3", "--seed", "0")
    v = res.verdict
    ok = v["all_hold"] and v["zero_c_refused"] and v["zero_sigma_skipped"] and runtime < 60
    assert report(7, ok, f"{v['rows']} checks hold {v['all_hold']} (min rhs/lhs {v['min_ratio']:.3f}), "
                         f"c_l = 0 refused {v['zero_c_refused']}, sigma_l = 0 skipped "
                         f"{v['zero_sigma_skipped']}, max refinement change {v['max_change']:.2e}, "
                         f"runtime {runtime:.1f} s (< 60 s)")


RERUNS = [
    ("identity", "--n", "2,3,4,5", "--samples", "1000"),
    ("identity", "--quarter", "--n", "3", "--k", "1,2,3", "--samples", "1000"),
    ("sharpness", "--q", "1", "--ks", "1e2,1e3,1e4,1e5", "--beta-tail", "0.25,0.25"),
    ("sharpness", "--q", "2", "--alpha", "0.0,0,0", "--ks", "1e2,1e3,1e4,1e5"),
    ("sharpness", "--q", "2", "--alpha", "-0.5,0,0", "--ks", "1e2,1e3,1e4,1e5"),
    ("eigen", "--k", "1", "--n", "3", "--refine", "3", "--psd"),
    ("eigen", "--k", "3", "--n", "3", "--refine", "3"),
    ("sobolev-null", "--alpha", "0,0,0", "--eps", "0.2,0.1,0.05,0.025"),
    ("sobolev-null", "--alpha", "0,0,-0.25", "--eps", "0.2,0.1,0.05,0.025"),
    ("l1", "--n", "3", "--seed", "0"),
]


def test_criterion_8_reproducibility(report):
    same, json_same = [], True
    for argv in RERUNS:
        first = _FIRST.get(argv) or suite(*argv)[0].text
        again = execute(parse_config(list(argv))).text
        same.append(first == again)
    # JSON rendering of a cheap suite is byte-identical as well
    j = ("beta", "--alpha", "0,0,-0.25", "--format", "json")
    json_same = execute(parse_config(list(j))).text == execute(parse_config(list(j))).text
    ok = all(same) and json_same
    assert report(8, ok, f"{sum(same)}/{len(same)} suite reports byte-identical on rerun, "
                         f"JSON identical {json_same}")
