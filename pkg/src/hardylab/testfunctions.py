"""Sharpness test families and their Rayleigh-type quotients.

Test functions are products of factors, each depending on one prefix norm
``r_j = |X_j|``: powers ``r_j^p``, logarithmic cutoffs ``h_k(r_j)`` and a radial
bump of ``r_n = |x|``.  With ``c_m = du/dr_m`` (product rule over factors)

    |grad u|^2 = sum_m c_m^2 + 2 sum_{j<m} c_j c_m r_j / r_m

because ``grad r_m = X_m / r_m`` and ``X_j . X_m = r_j^2`` for ``j < m``.

Quotients are integrated with :mod:`hardylab.quadrature` and always carry a
refinement-based error estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .constants import alpha_to_beta, gamma_from_alpha
from .quadrature import (PrefixDomain, QuadratureRule, gauss_panels, integrate_prefix,
                         sin_power_integral)

#: Relative change under refinement above which a report is flagged.
REFINE_TOL = 5e-3

K_SCHEDULE = (1e2, 1e3, 1e4, 1e5)
EPS_SCHEDULE = (0.2, 0.1, 0.05, 0.025)


# --- factors ---------------------------------------------------------------

@dataclass(frozen=True)
class Cutoff:
    """h(t) = 0 below 1/k^2, 1 + ln(k t)/ln k on the band, 1 above 1/k.

    ``scale`` dilates the argument: the factor is h(t / scale).
    """

    j: int
    k: float
    scale: float = 1.0

    def __post_init__(self):
        if not self.k > 1 or not math.isfinite(self.k):
            raise ValueError(f"cutoff scale k must be finite and > 1, got {self.k}")
        if self.j < 1:
            raise ValueError("prefix index j is 1-based")

    @property
    def breaks(self) -> tuple[float, float]:
        return (self.scale / self.k**2, self.scale / self.k)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.breaks
        lnk = math.log(self.k)
        band = (t >= lo) & (t <= hi)
        safe = np.where(band, t, hi)
        val = np.where(t < lo, 0.0, np.where(t >= hi, 1.0, 1.0 + np.log(self.k * safe / self.scale) / lnk))
        der = np.where(band, 1.0 / (safe * lnk), 0.0)
        return val, der


def eval_cutoff(c: Cutoff, t):
    """Value and derivative of the cutoff; band-side derivative at the kinks."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("cutoff argument must be nonnegative")
    return c(t)


def _smooth_step(tau):
    # C-infinity step: 0 for tau <= 0, 1 for tau >= 1
    tau = np.clip(tau, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        f0 = np.where(tau > 0, np.exp(-1.0 / np.where(tau > 0, tau, 1.0)), 0.0)
        f1 = np.where(tau < 1, np.exp(-1.0 / np.where(tau < 1, 1.0 - tau, 1.0)), 0.0)
        s = f0 / (f0 + f1)
        d0 = np.where(tau > 0, f0 / np.where(tau > 0, tau, 1.0) ** 2, 0.0)
        d1 = np.where(tau < 1, f1 / np.where(tau < 1, 1.0 - tau, 1.0) ** 2, 0.0)
        ds = (d0 * f1 + f0 * d1) / (f0 + f1) ** 2
    return s, ds


@dataclass(frozen=True)
class Bump:
    """Radial bump: 1 for r <= radius/2, 0 for r >= radius, smooth and monotone between.

    The shell transition is ``1 - S(2 r / radius - 1)`` with the standard
    ``exp(-1/t)`` smooth step ``S``; every derivative vanishes at both ends.
    """

    j: int
    radius: float = 1.0

    @property
    def breaks(self) -> tuple[float]:
        return (self.radius / 2,)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        s, ds = _smooth_step(2.0 * r / self.radius - 1.0)
        return 1.0 - s, -ds * (2.0 / self.radius)


@dataclass(frozen=True)
class Power:
    j: int
    p: float
    breaks = ()

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.p == 0:
            return np.ones_like(r), np.zeros_like(r)
        v = r**self.p
        return v, self.p * v / r


@dataclass(frozen=True)
class ProductFunction:
    """u = prod of factors, each a function of one prefix norm."""

    n: int
    factors: tuple

    def __post_init__(self):
        for f in self.factors:
            if not 1 <= f.j <= self.n:
                raise ValueError(f"factor index {f.j} outside 1..{self.n}")

    @property
    def indices(self) -> list[int]:
        return sorted({f.j for f in self.factors})

    def support(self) -> float:
        radii = [f.radius for f in self.factors if isinstance(f, Bump)]
        if not radii:
            raise ValueError("test function needs a bump for compact support")
        return min(radii)

    def evaluate(self, r: Sequence[np.ndarray]):
        """Return u and the partials {m: du/dr_m}."""
        grouped = {}
        for f in self.factors:
            val, der = f(r[f.j - 1])
            if f.j in grouped:
                v0, d0 = grouped[f.j]
                grouped[f.j] = (v0 * val, d0 * val + v0 * der)
            else:
                grouped[f.j] = (val, der)
        idx = list(grouped)
        u = 1.0
        for m in idx:
            u = u * grouped[m][0]
        partials = {}
        for m in idx:
            c = grouped[m][1]
            for m2 in idx:
                if m2 != m:
                    c = c * grouped[m2][0]
            partials[m] = c
        return u, partials

    def grad_sq(self, r, partials) -> np.ndarray:
        idx = sorted(partials)
        out = 0.0
        for a, m in enumerate(idx):
            out = out + partials[m] ** 2
            for j in idx[:a]:
                out = out + 2.0 * partials[j] * partials[m] * (r[j - 1] / r[m - 1])
        return out

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Cartesian gradient at points ``x`` of shape (..., n)."""
        x = np.asarray(x, dtype=float)
        r = list(np.moveaxis(np.sqrt(np.cumsum(x**2, axis=-1)), -1, 0))
        _, partials = self.evaluate(r)
        g = np.zeros_like(x)
        for m, c in partials.items():
            # d r_m / d x_i = x_i / r_m for i <= m
            g[..., :m] += (c / r[m - 1])[..., None] * x[..., :m]
        return g

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = list(np.moveaxis(np.sqrt(np.cumsum(x**2, axis=-1)), -1, 0))
        return self.evaluate(r)[0]


# --- families --------------------------------------------------------------

def _check_alpha(alpha, n):
    a = np.asarray(alpha, dtype=float)
    if a.shape != (n,):
        raise ValueError(f"alpha must have length n={n}")
    if np.any(a > 0):
        raise ValueError("alpha entries must be <= 0")
    return a


def step1_function(n: int, k1: float, radius: float = 1.0, scale: float = 1.0) -> ProductFunction:
    """u = x_1^(1/2) h_{k1}(x_1) b(|x|)."""
    return ProductFunction(n, (Power(1, 0.5), Cutoff(1, k1, scale), Bump(n, radius)))


def general_parts(q: int, alpha, kq: float, k1: Optional[float] = None,
                  radius: float = 1.0, scale: float = 1.0):
    """Weight exponents of W = prod_{j<q} |X_j|^(-gamma_j) and the factor v.

    v = |X_q|^(alpha_{q-1} - 1/2) h_{kq}(|X_q|) [h_{k1}(x_1)] b(|x|); the full
    test function is W v.  ``alpha_0`` is taken as 0 so q = 1 is step 1.
    """
    n = len(alpha)
    if not 1 <= q <= n:
        raise ValueError(f"q={q} outside 1..{n}")
    a = np.asarray(alpha, dtype=float)
    g = gamma_from_alpha(a)
    w_exp = {j: -g[j - 1] for j in range(1, q)}
    a_prev = a[q - 2] if q >= 2 else 0.0
    facs = [Power(q, a_prev - 0.5), Cutoff(q, kq, scale)]
    if k1 is not None and q > 1:
        facs.append(Cutoff(1, k1, scale))
    facs.append(Bump(n, radius))
    return w_exp, ProductFunction(n, tuple(facs))


def sobolev_null_parts(alpha, eps: float, k1: Optional[float] = None, radius: float = 1.0,
                       scale: float = 1.0):
    """W = prod_{j<n} |X_j|^(-gamma_j), v = |X_n|^(-gamma_n + eps) [h_{k1}(x_1)] b(|x|)."""
    a = np.asarray(alpha, dtype=float)
    n = a.size
    g = gamma_from_alpha(a)
    w_exp = {j: -g[j - 1] for j in range(1, n)}
    facs = [Power(n, -g[-1] + eps)]
    if k1 is not None:
        facs.append(Cutoff(1, k1, scale))
    facs.append(Bump(n, radius))
    return w_exp, ProductFunction(n, tuple(facs))


def _combine(w_exp: dict, v: ProductFunction) -> ProductFunction:
    """The full function W v as a single product."""
    extra = tuple(Power(j, e) for j, e in sorted(w_exp.items()) if e != 0)
    return ProductFunction(v.n, extra + v.factors)


# --- integration -----------------------------------------------------------

def _domain(v: ProductFunction, split: int) -> PrefixDomain:
    # a kink of r_j at b is felt by every r_m, m <= j, on the slice where the
    # later coordinates vanish, so it becomes a break of all those variables
    radial, outer = [], {}
    for f in v.factors:
        b = tuple(f.breaks)
        if not b:
            continue
        if f.j < split:
            raise ValueError(f"factor with kinks on index {f.j} below the split {split}")
        radial.extend(b)
        for m in range(split + 1, f.j + 1):
            outer.setdefault(m, []).extend(b)
    R = v.support()
    lows = [f.breaks[0] for f in v.factors if isinstance(f, Cutoff) and f.j == split]
    if not lows:
        raise ValueError("the split index needs a cutoff to bound the radial domain")
    radial = sorted(set(b for b in radial if b < R) | {R})
    lo = max(lows)
    radial = [b for b in radial if b >= lo]
    return PrefixDomain(v.n, split, tuple(radial),
                        {m: tuple(sorted(set(b))) for m, b in outer.items()}, R)


def form_integrals(w_exp: dict, v: ProductFunction, split: int, inv_sq: Sequence[int],
                   rule: QuadratureRule, crit_power: Optional[float] = None) -> dict:
    """Weighted integrals of v with W^2 = prod r_j^(2 e_j).

    Returns ``energy`` = int W^2 |grad v|^2, ``mass[i]`` = int W^2 v^2 / r_i^2
    for i in ``inv_sq`` and, if ``crit_power`` is given, ``crit`` =
    int (W |v|)^crit_power.
    """
    dom = _domain(v, split)
    inv_sq = list(inv_sq)

    def integrand(r):
        val, partials = v.evaluate(r)
        logw = 0.0
        for j, e in w_exp.items():
            logw = logw + e * np.log(r[j - 1])
        w2 = np.exp(2.0 * logw)
        out = [w2 * v.grad_sq(r, partials)]
        v2 = w2 * val**2
        out += [v2 / r[i - 1] ** 2 for i in inv_sq]
        if crit_power is not None:
            out.append((np.exp(logw) * np.abs(val)) ** crit_power)
        return out

    vals = integrate_prefix(integrand, dom, rule)
    res = {"energy": float(vals[0]), "mass": {i: float(vals[1 + c]) for c, i in enumerate(inv_sq)}}
    if crit_power is not None:
        res["crit"] = float(vals[-1])
    return res


# --- reports ---------------------------------------------------------------

@dataclass
class QuotientReport:
    family: str
    q: int
    n: int
    alpha: tuple
    param: float                 # k (cutoff scale) or eps
    numerator: float
    denominator: float
    value: float
    resolution: str
    error_estimate: float
    flagged: bool = False
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.denominator > 0:
            raise ArithmeticError(f"non-positive denominator {self.denominator}")

    def row(self) -> dict:
        d = {"family": self.family, "q": self.q, "n": self.n}
        for i, a in enumerate(self.alpha, 1):
            d[f"alpha{i}"] = float(a)
        d.update({"k_or_eps": self.param, "numerator": self.numerator,
                  "denominator": self.denominator, "value": self.value,
                  "resolution": self.resolution, "error_estimate": self.error_estimate,
                  "flagged": self.flagged})
        return d


def _finish(family, q, n, alpha, param, compute, rule, extras_fn=None):
    """Evaluate at ``rule`` and its refinement; report the finer value."""
    coarse = compute(rule)
    fine_rule = rule.refined()
    fine = compute(fine_rule)
    num, den = fine["num"], fine["den"]
    value = num / den
    err = abs(value - coarse["num"] / coarse["den"])
    extras = {k: v for k, v in fine.items() if k not in ("num", "den")}
    return QuotientReport(family, q, n, tuple(float(a) for a in alpha), float(param),
                          num, den, value, fine_rule.label, err,
                          flagged=bool(err > REFINE_TOL * abs(value)), extras=extras)


def quotient_step1(beta_tail: Sequence[float], k1: float, rule: Optional[QuadratureRule] = None,
                   radius: float = 1.0, scale: float = 1.0) -> QuotientReport:
    """Q_1[u] = (int |grad u|^2 - sum_{i>=2} beta_i int u^2/|X_i|^2) / int u^2/x_1^2."""
    rule = rule or QuadratureRule()
    tail = np.asarray(beta_tail, dtype=float)
    n = tail.size + 1
    u = step1_function(n, k1, radius, scale)
    others = list(range(2, n + 1))

    def compute(rl):
        f = form_integrals({}, u, 1, [1] + others, rl)
        tails = [f["mass"][i] for i in others]
        num = f["energy"] - float(np.dot(tail, tails))
        den = f["mass"][1]
        return {"num": num, "den": den, "energy": f["energy"], "tails": tails,
                "den_per_lnk": den / math.log(k1), "beta_tail": tail.tolist()}

    return _finish("step1", 1, n, (), k1, compute, rule)


def quotient_general(q: int, alpha: Sequence[float], kq: float, k1: Optional[float] = None,
                     rule: Optional[QuadratureRule] = None, radius: float = 1.0,
                     scale: float = 1.0) -> QuotientReport:
    """Q_q on u = W v with W = prod_{j<q}|X_j|^(-gamma_j).

    ``k1=None`` realizes the limit k_1 -> infinity: h_{k1} = 1 and the
    substituted form

        (int W^2 |grad v|^2 - sum_{i>q} beta_i int W^2 v^2/|X_i|^2) / int W^2 v^2/|X_q|^2

    is integrated with the polar split at q (the region |X_q| < 1/k_q^2 is
    excised; v vanishes there).  With finite k_1 the original quotient

        (int |grad u|^2 - sum_{i!=q} beta_i int u^2/|X_i|^2) / int u^2/|X_q|^2

    is integrated as well and its agreement with the substituted one is
    recorded in ``extras``.
    """
    rule = rule or QuadratureRule()
    a = _check_alpha(alpha, len(alpha))
    n = a.size
    if not 2 <= q <= n:
        raise ValueError(f"q={q} must satisfy 2 <= q <= n={n}")
    beta = alpha_to_beta(a)
    w_exp, v = general_parts(q, a, kq, k1, radius, scale)
    tail_idx = list(range(q + 1, n + 1))
    split = q if k1 is None else 1

    def compute(rl):
        f = form_integrals(w_exp, v, split, [q] + tail_idx, rl)
        tails = [f["mass"][i] for i in tail_idx]
        num = f["energy"] - float(np.dot(beta[q:], tails))
        out = {"num": num, "den": f["mass"][q], "tails": tails}
        if k1 is not None:
            u = _combine(w_exp, v)
            idx = [i for i in range(1, n + 1)]
            g = form_integrals({}, u, 1, idx, rl)
            onum = g["energy"] - sum(beta[i - 1] * g["mass"][i] for i in idx if i != q)
            oval = onum / g["mass"][q]
            out["original_value"] = oval
            out["substitution_gap"] = abs(oval - num / f["mass"][q])
        return out

    return _finish("general-q", q, n, a, kq, compute, rule)


def _radial_panels(lo, hi, order, pieces):
    return gauss_panels(np.linspace(lo, hi, pieces + 1), order)


def sobolev_null_quotient(alpha: Sequence[float], eps: float, k1: Optional[float] = None,
                          rule: Optional[QuadratureRule] = None, radius: float = 1.0) -> QuotientReport:
    """N/D for v = |X_n|^(-gamma_n + eps) [h_{k1}] b in the weighted form

        N = int W^2 |grad v|^2 - beta_n int W^2 v^2/|X_n|^2,
        D = (int (W |v|)^(2n/(n-2)))^((n-2)/n),   W = prod_{j<n}|X_j|^(-gamma_j).

    With ``k1=None`` (the limit k_1 -> infinity) the integrals separate in
    polar coordinates of R^n_+: angular factors are sin-power integrals and
    the radial core on [0, radius/2] is an exact power integral.
    """
    rule = rule or QuadratureRule()
    a = _check_alpha(alpha, len(alpha))
    n = a.size
    if n < 3:
        raise ValueError("sobolev-null quotient needs n >= 3")
    if not 0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 1/2]")
    beta_n = alpha_to_beta(a)[-1]
    g = gamma_from_alpha(a)
    p_crit = 2.0 * n / (n - 2)

    if k1 is not None:
        w_exp, v = sobolev_null_parts(a, eps, k1, radius)

        def compute(rl):
            f = form_integrals(w_exp, v, 1, [n], rl, crit_power=p_crit)
            num = f["energy"] - beta_n * f["mass"][n]
            return {"num": num, "den": f["crit"] ** ((n - 2) / n), "crit": f["crit"]}

        return _finish("sobolev-null", n, n, a, eps, compute, rule)

    # exponents of sin(theta_i) in W^2 dOmega and W^(2*) dOmega
    i = np.arange(1, n)
    e_w = -2 * a[:-1] - i + 2            # W^2 at r = 1
    e2 = e_w + (i - 1)
    e_crit = (p_crit / 2) * e_w + (i - 1)
    w_rad = -float(np.sum(g[:-1]))       # W = r^w_rad * angular
    expo = -g[-1] + eps                  # v = r^expo on the core

    def compute(rl):
        A2 = math.prod(sin_power_integral(e, rl) for e in e2)
        Ac = math.prod(sin_power_integral(e, rl) for e in e_crit)
        half = radius / 2
        # core: v = r^expo exactly
        pn = n - 3 + 2 * w_rad + 2 * expo
        pd = n - 1 + p_crit * (w_rad + expo)
        if pn <= -1 or pd <= -1:
            raise ArithmeticError("radial core integral diverges")
        n_core = (expo**2 - beta_n) * half ** (pn + 1) / (pn + 1)
        d_core = half ** (pd + 1) / (pd + 1)
        pieces = max(2, math.ceil(4.0 / rl.outer_width))
        rr, wr = _radial_panels(half, radius, rl.order, pieces)
        b, db = Bump(n, radius)(rr)
        vv = rr**expo * b
        dv = expo * rr ** (expo - 1) * b + rr**expo * db
        n_shell = float(np.dot(wr, rr ** (n - 1 + 2 * w_rad) * (dv**2 - beta_n * vv**2 / rr**2)))
        d_shell = float(np.dot(wr, rr ** (n - 1 + p_crit * w_rad) * np.abs(vv) ** p_crit))
        num = A2 * (n_core + n_shell)
        crit = Ac * (d_core + d_shell)
        return {"num": num, "den": crit ** ((n - 2) / n), "crit": crit,
                "angular_l2": A2, "angular_crit": Ac}

    return _finish("sobolev-null", n, n, a, eps, compute, rule)


# --- sweeps ----------------------------------------------------------------

@dataclass
class SweepSummary:
    reports: list
    target: float
    decreasing: bool
    floor_ok: bool
    final_gap: float             # |final - target| / target
    checks: dict = field(default_factory=dict)


def _decreasing(vals) -> bool:
    return all(b < a for a, b in zip(vals, vals[1:]))


def step1_sweep(beta_tail, ks=K_SCHEDULE, rule=None, floor_tol=1e-3) -> SweepSummary:
    reps = [quotient_step1(beta_tail, k, rule) for k in ks]
    vals = [r.value for r in reps]
    checks = {}
    if len(ks) >= 3:
        # ln-growth: den(k_3)/den(k_1) vs ln k_3/ln k_1
        expect = math.log(ks[2]) / math.log(ks[0])
        checks["ln_growth_ratio"] = reps[2].denominator / reps[0].denominator
        checks["ln_growth_expected"] = expect
    return SweepSummary(reps, 0.25, _decreasing(vals), min(vals) >= 0.25 - floor_tol,
                        abs(vals[-1] - 0.25) / 0.25, checks)


def general_sweep(q, alpha, ks=K_SCHEDULE, rule=None, floor_tol=1e-3) -> SweepSummary:
    a = np.asarray(alpha, dtype=float)
    target = (a[q - 2] - 0.5) ** 2
    reps = [quotient_general(q, a, k, None, rule) for k in ks]
    vals = [r.value for r in reps]
    checks = {}
    if q < a.size:
        ratios = []
        for k, rep in zip(ks, reps):
            doubled = quotient_general(q, a, 2 * k, None, rule)
            ratios.append(max(x / y if y != 0 else math.inf
                              for x, y in zip(doubled.extras["tails"], rep.extras["tails"])))
        checks["tail_ratio_max"] = max(ratios)
    return SweepSummary(reps, target, _decreasing(vals), min(vals) >= target - floor_tol,
                        abs(vals[-1] - target) / target, checks)


def loglog_slope(xs, ys) -> float:
    lx, ly = np.log(np.asarray(xs)), np.log(np.asarray(ys))
    return float(np.polyfit(lx, ly, 1)[0])


def sobolev_null_sweep(alpha, eps=EPS_SCHEDULE, rule=None) -> SweepSummary:
    reps = [sobolev_null_quotient(alpha, e, None, rule) for e in eps]
    vals = [r.value for r in reps]
    checks = {"slope": loglog_slope(eps, vals) if min(vals) > 0 else math.nan,
              "min_over_max": min(vals) / max(vals) if max(vals) > 0 else math.nan}
    return SweepSummary(reps, 0.0, _decreasing(vals), min(vals) >= 0.0, math.nan, checks)
