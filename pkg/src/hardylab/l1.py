"""Spot checks of the weighted L1 inequalities behind the Sobolev remainder.

* divergence inequality  |int div F |v||  <=  int |F| |grad v|;
* step inequality        c_l int w_l |X_l|^-1 |v|  <=  int w_l |grad v|,
  w_l = x_1^s_1 |X_2|^s_2 ... |X_l|^s_l, which is the divergence inequality
  for F = w_l X_l / |X_l|^2 (div F = (s_1 + ... + s_l + l - 1) w_l / |X_l|);
* the weighted L1 hypothesis  int phi^(2(n-1)/(n-2)) |grad v|  >=  C int phi^(n/(n-2)) |grad phi| |v|.

Sample functions are C^3, compactly supported in the open half-space and
carry closed-form gradients (the inequalities extend to such functions by
density, and piecewise-polynomial bumps keep the tensor rule accurate).  Integrals over a sample's support box use a
composite Gauss tensor rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .constants import ZERO_TOL, c_from_sigma
from .fields import HalfSpaceField, QuarterSpaceField, prefix_norms
from .quadrature import gauss_panels, subdivide
from .testfunctions import _smooth_step

LIBRARY_FIXED = 20
LIBRARY_RANDOM = 180
SLACK_TOL = 1e-6


class ConditionViolation(ValueError):
    """c_l = 0 while sigma_l != 0: the step inequality is not available."""


# --- sample functions ------------------------------------------------------

def _bump1d(t):
    """(1 - t^2)^4 on |t| < 1 with its derivative (C^3, piecewise polynomial)."""
    s = np.where(np.abs(t) < 1, 1.0 - t * t, 0.0)
    return s**4, -8.0 * t * s**3


@dataclass(frozen=True)
class SampleFunction:
    """v(x) = prod_i psi((x_i - c_i)/rho_i) * modulation(x).

    Modulations: ``none``; ``zero``; ``gauss`` exp(-|x-g|^2/(2 s^2)); ``wave``
    cos(w.x + phase) (changes sign); ``affine`` 1 + a.(x - c) (may change sign).
    """

    center: tuple
    radii: tuple
    modulation: str = "none"
    params: tuple = ()
    label: str = ""

    @property
    def n(self) -> int:
        return len(self.center)

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        c, r = np.asarray(self.center), np.asarray(self.radii)
        return c - r, c + r

    def hints(self, axis: int) -> np.ndarray:
        """Extra break points along ``axis`` resolving the modulation."""
        lo, hi = self.box()
        if self.modulation == "gauss":
            g, s = self.params[axis], self.params[self.n]
            return g + s * np.array([-3, -2, -1, -0.5, 0, 0.5, 1, 2, 3])
        if self.modulation == "wave":
            w = abs(self.params[axis])
            if w > 0:
                return np.arange(lo[axis], hi[axis], math.pi / w)
        return np.array([])

    def _modulation(self, x):
        n = self.n
        if self.modulation == "none":
            return np.ones(x.shape[:-1]), np.zeros_like(x)
        if self.modulation == "zero":
            return np.zeros(x.shape[:-1]), np.zeros_like(x)
        if self.modulation == "gauss":
            g, s = np.asarray(self.params[:n]), self.params[n]
            d = x - g
            val = np.exp(-np.sum(d * d, axis=-1) / (2 * s * s))
            return val, -(d / (s * s)) * val[..., None]
        if self.modulation == "wave":
            w, ph = np.asarray(self.params[:n]), self.params[n]
            arg = x @ w + ph
            return np.cos(arg), -np.sin(arg)[..., None] * w
        if self.modulation == "affine":
            a = np.asarray(self.params[:n])
            val = 1.0 + (x - np.asarray(self.center)) @ a
            return val, np.broadcast_to(a, x.shape).copy()
        raise ValueError(f"unknown modulation {self.modulation!r}")

    def value_and_grad(self, x):
        x = np.asarray(x, dtype=float)
        c, r = np.asarray(self.center), np.asarray(self.radii)
        t = (x - c) / r
        vals, ders = _bump1d(t)
        base = np.prod(vals, axis=-1)
        gb = np.empty_like(x)
        for i in range(self.n):
            others = np.prod(np.delete(vals, i, axis=-1), axis=-1)
            gb[..., i] = others * ders[..., i] / r[i]
        m, gm = self._modulation(x)
        return base * m, gb * m[..., None] + base[..., None] * gm


def into_quarter(v: SampleFunction, k: int, margin: float = 0.05) -> SampleFunction:
    """Translate v so its support lies in {x_i >= margin, i <= k}."""
    c = np.asarray(v.center, dtype=float)
    lo, _ = v.box()
    shift = np.zeros_like(c)
    shift[:k] = np.maximum(margin - lo[:k], 0.0)
    params = v.params
    if v.modulation == "gauss":
        params = tuple((np.asarray(params[:v.n]) + shift).tolist()) + params[v.n:]
    elif v.modulation == "wave":
        w = np.asarray(params[:v.n])
        params = params[:v.n] + (params[v.n] - float(w @ shift),)
    return SampleFunction(tuple((c + shift).tolist()), v.radii, v.modulation, params, v.label)


def zero_sample(n: int) -> SampleFunction:
    return SampleFunction(tuple([1.5] + [0.0] * (n - 1)), tuple([0.5] * n), "zero", (), "zero")


def sample_library(n: int = 3, seed: int = 0, fixed: int = LIBRARY_FIXED,
                   random: int = LIBRARY_RANDOM) -> list[SampleFunction]:
    """Deterministic samples followed by seeded random compositions.

    Every support box lies in {0.05 <= x_1}, well inside the half-space.
    """
    lib = []
    for j in range(fixed):
        c1 = 0.4 + 0.15 * j
        rho = 0.3 + 0.02 * (j % 5)
        center = tuple([c1] + [0.25 * ((j + i) % 3 - 1) for i in range(1, n)])
        radii = tuple([rho] + [0.5 + 0.1 * ((j + i) % 4) for i in range(1, n)])
        kind = ("none", "gauss", "wave", "affine")[j % 4]
        if kind == "gauss":
            params = tuple(np.asarray(center) + 0.1) + (0.3,)
        elif kind == "wave":
            params = tuple([2.0 + 0.5 * (j % 3)] + [1.0] * (n - 1)) + (0.3 * j,)
        elif kind == "affine":
            params = tuple([1.5] + [-0.5] * (n - 1))
        else:
            params = ()
        lib.append(SampleFunction(center, radii, kind, tuple(float(p) for p in params), f"fixed-{j}"))
    rng = np.random.default_rng(seed)
    for j in range(random):
        rho1 = rng.uniform(0.1, 1.0)
        c1 = 0.05 + rho1 + rng.uniform(0.0, 2.0)
        center = np.concatenate(([c1], rng.uniform(-1.0, 1.0, n - 1)))
        radii = np.concatenate(([rho1], rng.uniform(0.2, 1.5, n - 1)))
        kind = rng.choice(["none", "gauss", "wave", "affine"])
        if kind == "gauss":
            params = np.concatenate((center + rng.normal(0, 0.3, n), [rng.uniform(0.1, 1.0)]))
        elif kind == "wave":
            params = np.concatenate((rng.normal(0, 3.0, n), [rng.uniform(0, 2 * math.pi)]))
        elif kind == "affine":
            params = rng.normal(0, 1.5, n)
        else:
            params = np.array([])
        lib.append(SampleFunction(tuple(center.tolist()), tuple(radii.tolist()), str(kind),
                                  tuple(params.tolist()), f"random-{j}"))
    return lib


@dataclass(frozen=True)
class BoxRule:
    """Composite Gauss tensor rule on a sample's support box.

    Break points: ``panels`` uniform panels per axis plus points graded
    geometrically (ratio 2) toward the singular hyperplanes -- from the lower
    edge on axes bounded away from 0 and symmetrically around 0 on the others,
    at the scale of the distance to {x_1 = 0}.  ``level`` splits every panel
    into 2**level pieces, so ``refined()`` halves all spacings.
    """

    panels: int = 2
    order: int = 5
    level: int = 0

    def refined(self) -> "BoxRule":
        return BoxRule(self.panels, self.order, self.level + 1)

    @property
    def label(self) -> str:
        return f"box-p{self.panels}-o{self.order}-l{self.level}"

    def breaks(self, a: float, b: float, d: float, extra=()) -> np.ndarray:
        pts = set(np.linspace(a, b, self.panels + 1).tolist())
        extra = np.asarray(extra, dtype=float)
        pts.update(extra[(extra > a) & (extra < b)].tolist())
        j = np.arange(0, 40)
        geo = d * 2.0**j
        cand = np.concatenate((geo, -geo, [0.0]))
        if a > 0:
            cand = np.concatenate((cand, a * 2.0**j))
        pts.update(cand[(cand > a) & (cand < b)].tolist())
        out = np.array(sorted(pts))
        keep = np.concatenate(([True], np.diff(out) > 1e-3 * (b - a)))
        out = out[keep]
        out[-1] = b
        if self.level:
            m = 2**self.level
            out = np.concatenate([np.linspace(x, y, m + 1)[:-1] for x, y in zip(out[:-1], out[1:])] + [[b]])
        return out

    def axis_nodes(self, lo, hi, hints=None):
        pts, wts = [], []
        d = max(lo[0], 1e-3)
        for i, (a, b) in enumerate(zip(lo, hi)):
            extra = hints(i) if hints is not None else ()
            x, w = gauss_panels(self.breaks(a, b, d, extra), self.order)
            pts.append(x)
            wts.append(w)
        return pts, wts

    def nodes(self, lo, hi, hints=None):
        pts, wts = self.axis_nodes(lo, hi, hints)
        grid = np.stack(np.meshgrid(*pts, indexing="ij"), axis=-1).reshape(-1, len(lo))
        weight = np.ones(1)
        for w in wts:
            weight = np.multiply.outer(weight, w).ravel()
        return grid, weight


@lru_cache(maxsize=2)
def _sampled(v: SampleFunction, rule: BoxRule):
    # shared by every check on the same sample; arrays are treated as read-only
    lo, hi = v.box()
    axes, weights = rule.axis_nodes(lo, hi, v.hints)
    n = len(axes)
    x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    # separable bump part from 1-d factors
    c, r = np.asarray(v.center), np.asarray(v.radii)
    f = [_bump1d((a - c[i]) / r[i]) for i, a in enumerate(axes)]
    shape1 = lambda i, arr: arr.reshape([-1 if j == i else 1 for j in range(n)])
    base = 1.0
    for i in range(n):
        base = base * shape1(i, f[i][0])
    gb = np.empty(x.shape)
    for i in range(n):
        g = shape1(i, f[i][1] / r[i])
        for j in range(n):
            if j != i:
                g = g * shape1(j, f[j][0])
        gb[..., i] = g
    m, gm = v._modulation(x)
    val = base * m
    grad = gb * m[..., None] + base[..., None] * gm
    w = 1.0
    for i in range(n):
        w = w * shape1(i, weights[i])
    flat = lambda a: a.reshape(-1, *a.shape[n:])
    return (flat(x), w.ravel(), np.abs(val).ravel(),
            np.sqrt(np.einsum("...i,...i->...", grad, grad)).ravel())


def _integrate(fn: Callable, v: SampleFunction, rule: BoxRule) -> np.ndarray:
    x, w, absval, gnorm = _sampled(v, rule)
    out = fn(x, absval, gnorm)
    # pairwise summation in a fixed order: deterministic
    return np.array([float(np.sum(c * w)) for c in out])


# --- vector fields ---------------------------------------------------------

@dataclass(frozen=True)
class PowerField:
    """F = (x_1^sigma, 0, ..., 0)."""

    sigma: float
    n: int

    def value(self, x):
        out = np.zeros_like(x)
        out[..., 0] = x[..., 0] ** self.sigma
        return out

    def divergence(self, x):
        return self.sigma * x[..., 0] ** (self.sigma - 1)


def _step_weight(sigma, x, l):
    r = prefix_norms(x)
    w = np.ones(r.shape[:-1])
    for i, s in enumerate(sigma[:l]):
        if s != 0:
            w *= r[..., i] ** s
    return w, r


@dataclass(frozen=True)
class StepField:
    """F = x_1^s_1 |X_2|^s_2 ... |X_l|^(s_l - 1) X_l."""

    sigma: tuple
    l: int
    n: int

    def value(self, x):
        w, r = _step_weight(self.sigma, x, self.l)
        out = np.zeros_like(x)
        out[..., : self.l] = (w / r[..., self.l - 1])[..., None] * x[..., : self.l]
        return out

    def divergence(self, x):
        w, r = _step_weight(self.sigma, x, self.l)
        return (float(np.sum(self.sigma[: self.l])) + self.l - 1) * w / r[..., self.l - 1]


@dataclass(frozen=True)
class DriftField:
    """Drift F = -grad(phi)/phi of a half- or quarter-space weight."""

    field: object

    @property
    def n(self) -> int:
        return self.field.n

    def value(self, x):
        return self.field.drift(x)

    def divergence(self, x):
        return self.field.divergence(x)


# --- checks ----------------------------------------------------------------

@dataclass
class CheckRow:
    check: str
    params: str
    sample: str
    lhs: float
    rhs: float
    resolution: str
    change: float = 0.0        # max relative change of lhs, rhs under refinement
    extras: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + SLACK_TOL) + 1e-300

    def row(self) -> dict:
        return {"check": self.check, "params": self.params, "sample": self.sample,
                "lhs": self.lhs, "rhs": self.rhs, "slack": self.slack,
                "resolution": self.resolution, "change": self.change}


def _rel_change(a, b):
    # relative to the larger side: a signed lhs may nearly cancel
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b)) / scale)


def _two_level(fn, v, rule):
    coarse = _integrate(fn, v, rule)
    fine = _integrate(fn, v, rule.refined())
    return fine, _rel_change(coarse, fine)


def div_ineq_check(F, v: SampleFunction, rule: Optional[BoxRule] = None, name: str = "") -> CheckRow:
    """(|int div F |v||, int |F| |grad v|)."""
    rule = rule or BoxRule()

    def fn(x, absval, gnorm):
        Fx = F.value(x)
        return (F.divergence(x) * absval,
                np.sqrt(np.einsum("...i,...i->...", Fx, Fx)) * gnorm)

    (a, b), change = _two_level(fn, v, rule)
    return CheckRow("divergence", name or type(F).__name__, v.label, abs(a), b,
                    rule.refined().label, change)


def step_inequality_check(l: int, sigma: Sequence[float], v: SampleFunction,
                          rule: Optional[BoxRule] = None) -> Optional[CheckRow]:
    """(c_l int w_l |X_l|^-1 |v|, int w_l |grad v|); None when sigma_l = 0 (skipped).

    Raises :class:`ConditionViolation` if c_l = 0 and sigma_l != 0.
    """
    sigma = tuple(float(s) for s in sigma)
    if not 1 <= l <= len(sigma):
        raise ValueError(f"l={l} outside 1..{len(sigma)}")
    c = c_from_sigma(sigma)[l - 1]
    if abs(sigma[l - 1]) <= ZERO_TOL:
        return None
    if c <= ZERO_TOL:
        raise ConditionViolation(f"c_{l} = {c:g} with sigma_{l} = {sigma[l - 1]:g}")
    rule = rule or BoxRule()
    padded = sigma + (0.0,) * (v.n - len(sigma))

    def fn(x, absval, gnorm):
        w, r = _step_weight(padded, x, l)
        return (w / r[..., l - 1] * absval, w * gnorm)

    (a, b), change = _two_level(fn, v, rule)
    return CheckRow("step", f"l={l};sigma={list(sigma)}", v.label, c * a, b,
                    rule.refined().label, change, {"c_l": float(c)})


def thmC_hypothesis_check(phi_field: HalfSpaceField, v: SampleFunction,
                          rule: Optional[BoxRule] = None) -> CheckRow:
    """lhs = int phi^(2(n-1)/(n-2)) |grad v|, rhs = int phi^(n/(n-2)) |grad phi| |v|.

    ``extras['ratio']`` = rhs/lhs (an empirical lower bound for 1/C), None if lhs = 0.
    """
    n = phi_field.n
    if n < 3:
        raise ValueError("the weighted L1 hypothesis needs n >= 3")
    rule = rule or BoxRule()
    a, b = 2.0 * (n - 1) / (n - 2), n / (n - 2)

    def fn(x, absval, gnorm):
        ph = phi_field.phi(x)
        gphi = ph * np.linalg.norm(phi_field.drift(x), axis=-1)
        return (ph**a * gnorm, ph**b * gphi * absval)

    (lhs, rhs), change = _two_level(fn, v, rule)
    ratio = rhs / lhs if lhs > 0 else None
    return CheckRow("weighted-l1", f"alpha={np.round(_alpha_of(phi_field), 12).tolist()}", v.label,
                    lhs, rhs, rule.refined().label, change, {"ratio": ratio})


def _alpha_of(f: HalfSpaceField):
    from .constants import alpha_from_gamma
    return alpha_from_gamma(f.gamma)


# --- concentrating radial plateaus -----------------------------------------

@dataclass(frozen=True)
class ConeSample:
    """v = rho(|x|) chi(psi) in R^3, psi the angle to e_1.

    rho ramps up smoothly (in ln r) on [delta, 2 delta] and down on [1/2, 1];
    chi = 1 for psi < pi/2 - 2 eta and 0 beyond pi/2 - eta, so the support
    avoids the boundary of the half-space.
    """

    delta: float
    eta: float = math.pi / 6

    @property
    def psi0(self) -> float:
        return math.pi / 2 - 2 * self.eta

    @property
    def psi1(self) -> float:
        return math.pi / 2 - self.eta

    def profile(self, r):
        t = np.log(r)
        up, dup = _smooth_step((t - math.log(self.delta)) / math.log(2.0))
        dn, ddn = _smooth_step((t - math.log(0.5)) / math.log(2.0))
        val = up * (1.0 - dn)
        der = (dup * (1.0 - dn) - up * ddn) / (math.log(2.0) * r)
        return val, der

    def angular(self, psi):
        s, ds = _smooth_step((psi - self.psi0) / self.eta)
        return 1.0 - s, -ds / self.eta


def _graded(a: float, b: float, focus: float, finest: float, per: int) -> np.ndarray:
    """Break points on [a, b] graded geometrically toward ``focus`` in [a, b]."""
    pts = [a, b, focus]
    for side in (focus - a, b - focus):
        if side <= 0:
            continue
        h = side
        while h > finest:
            h /= 2
            pts.append(focus - h if side == focus - a else focus + h)
    pts = np.unique(np.clip(pts, a, b))
    return subdivide(pts, (b - a) / per)


def cone_thmC(phi_field: HalfSpaceField, sample: ConeSample, order: int = 8,
              radial_panels_per_decade: int = 4, angular_panels: int = 8):
    """(lhs, rhs) of the weighted L1 hypothesis for a cone sample, in polar coordinates."""
    if phi_field.n != 3:
        raise ValueError("cone samples are implemented for n = 3")
    n = 3
    a, b = 2.0 * (n - 1) / (n - 2), n / (n - 2)
    decades = math.log10(1.0 / sample.delta)
    rb = np.exp(np.linspace(math.log(sample.delta), 0.0,
                            max(2, math.ceil(decades * radial_panels_per_decade)) + 1))
    rb = np.unique(np.concatenate((rb, [2 * sample.delta, 0.5])))
    r, wr = gauss_panels(rb, order, log=True)
    # psi panels graded toward the cutoff edge, azimuth graded toward x_2 = 0
    eta = sample.eta
    pb = np.unique(np.concatenate((
        _graded(0.0, sample.psi0, sample.psi0, eta / 4, angular_panels),
        subdivide([sample.psi0, sample.psi1], eta / 4))))
    psi, wp = gauss_panels(pb, order)
    tb = _graded(0.0, math.pi / 2, math.pi / 2, eta / 4, angular_panels)
    t, wt = gauss_panels(tb, order)
    # the integrands are even in x_2 and in x_3: fold the azimuth to a quarter
    wt = 4.0 * wt
    R, P, T = np.meshgrid(r, psi, t, indexing="ij")
    W = (wr[:, None, None] * R**2) * (wp[None, :, None] * np.sin(P)) * wt[None, None, :]
    x = np.stack((R * np.cos(P), R * np.sin(P) * np.cos(T), R * np.sin(P) * np.sin(T)), axis=-1)
    rho, drho = sample.profile(R)
    chi, dchi = sample.angular(P)
    val = rho * chi
    # |grad v|^2 = (rho' chi)^2 + (rho chi' / r)^2
    gnorm = np.sqrt((drho * chi) ** 2 + (rho * dchi / R) ** 2)
    ph = phi_field.phi(x)
    gphi = ph * np.linalg.norm(phi_field.drift(x), axis=-1)
    lhs = float(np.sum(ph**a * gnorm * W))
    rhs = float(np.sum(ph**b * gphi * np.abs(val) * W))
    return lhs, rhs


def concentration_trend(phi_field: HalfSpaceField, deltas=(1e-1, 1e-2, 1e-3, 1e-4),
                        eta_scale: float = 0.25, **kw):
    """rhs/lhs of the weighted L1 hypothesis along plateaus reaching toward the
    origin, with cones opening to the boundary like eta = eta_scale / ln(1/delta)."""
    out = []
    for d in deltas:
        lhs, rhs = cone_thmC(phi_field, ConeSample(d, eta_scale / math.log(1.0 / d)), **kw)
        out.append((d, lhs, rhs, rhs / lhs))
    return out


# --- suites ----------------------------------------------------------------

def suite_fields(n: int = 3) -> list[tuple[str, object]]:
    """Every vector field used in the build, for the divergence inequality."""
    fields = [("power(sigma=2)", PowerField(2.0, n)),
              ("power(sigma=-1.5)", PowerField(-1.5, n)),
              ("drift(alpha=0)", DriftField(HalfSpaceField.from_alpha(np.zeros(n)))),
              ("drift(alpha=corner)", DriftField(HalfSpaceField.from_alpha(
                  np.where(np.arange(1, n + 1) < n, -np.arange(1, n + 1) / 2.0, 0.0))))]
    if n >= 2:
        fields.append(("drift(quarter k=2)", DriftField(QuarterSpaceField(2, n))))
        fields.append(("step(l=2,sigma=(2,1))", StepField((2.0, 1.0), 2, n)))
    fields.append((f"step(l={n},sigma=-1)", StepField(tuple([-1.0] * n), n, n)))
    return fields


def random_sigma_draws(n: int, count: int, seed: int):
    """(l, sigma) pairs satisfying the step condition (c_l != 0, sigma_l != 0)."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        sigma = np.round(rng.uniform(-3, 3, n), 3)
        l = int(rng.integers(1, n + 1))
        c = c_from_sigma(sigma)[l - 1]
        if abs(sigma[l - 1]) > ZERO_TOL and c > 1e-3:
            out.append((l, tuple(float(s) for s in sigma)))
    return out


def run_suite(n: int = 3, seed: int = 0, rule: Optional[BoxRule] = None) -> list[CheckRow]:
    """Divergence inequality for every suite field and step inequalities for
    random (sigma, v) draws over the seeded library."""
    rule = rule or BoxRule()
    lib = sample_library(n, seed)
    fields = suite_fields(n)
    draws = random_sigma_draws(n, len(lib), seed + 1)
    div_rows, quarter_rows, step_rows = [], [], []
    # sample-major order so the cached grids are reused across checks
    for v, (l, sigma) in zip(lib, draws):
        for name, F in fields:
            if isinstance(F, DriftField) and isinstance(F.field, QuarterSpaceField):
                continue
            div_rows.append(div_ineq_check(F, v, rule, name))
        step_rows.append(step_inequality_check(l, sigma, v, rule))
    for name, F in fields:
        if isinstance(F, DriftField) and isinstance(F.field, QuarterSpaceField):
            for v in lib:
                quarter_rows.append(div_ineq_check(F, into_quarter(v, F.field.k), rule, name))
    return div_rows + quarter_rows + step_rows
