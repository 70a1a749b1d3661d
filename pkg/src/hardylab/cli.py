"""Command-line runner for the suites.

Exit codes: 0 pass, 1 invariant violation, 2 usage error, 3 numerical failure.
Option precedence: flags > ``--config`` file > built-in defaults.  The
config file is flat ``key = value`` text whose keys are the long flag names
(dashes or underscores); ``#`` starts a comment.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import constants as C
from . import fem, l1, reports
from . import testfunctions as T
from .fields import HalfSpaceField, quarter_residual_suite, residual_suite
from .quadrature import QuadratureError, QuadratureRule

OUTPUT_ENV = "HARDYLAB_OUTPUT_DIR"
IDENTITY_THRESHOLD = 1e-10

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(ValueError):
    """Invalid configuration; carries the offending field name."""

    def __init__(self, fieldname: str, message: str):
        super().__init__(f"{fieldname}: {message}")
        self.field = fieldname


# --- value parsers -----------------------------------------------------------

def vector(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(t) for t in str(text).replace(" ", "").split(",") if t != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed vector {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty vector")
    if not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError(f"non-finite entry in {text!r}")
    return vals


def int_vector(text: str) -> tuple[int, ...]:
    vals = vector(text)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")
    return tuple(int(v) for v in vals)


def boolean(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# --- configuration -----------------------------------------------------------

@dataclass
class RunConfig:
    """Resolved options of one run; ``options`` keeps flag order."""

    command: str
    options: dict = field(default_factory=dict)
    seed: int = 0
    fmt: str = "csv"
    out: Optional[str] = None
    threads: Optional[int] = None

    def validate(self) -> None:
        if self.seed < 0:
            raise UsageError("seed", "must be >= 0")
        if self.fmt not in reports.FORMATS:
            raise UsageError("format", f"expected one of {reports.FORMATS}")
        if self.threads is not None and self.threads < 1:
            raise UsageError("threads", "must be >= 1")
        VALIDATORS[self.command](self.options)

    def echo(self) -> dict:
        out = {"command": self.command}
        out.update(self.options)
        out.update({"seed": self.seed, "format": self.fmt, "threads": self.threads})
        return out

    def rule(self) -> QuadratureRule:
        return QuadratureRule(order=self.options["order"])


def read_config_file(path: str) -> dict[str, str]:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError("config", f"cannot read {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError("config", f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = val
    return values


def _positive(opts, name, integer=False):
    v = opts.get(name)
    if v is None:
        return
    vals = v if isinstance(v, tuple) else (v,)
    if any(x <= 0 for x in vals):
        raise UsageError(name.replace("_", "-"), "must be positive")


def _one_source(opts, names):
    given = [n for n in names if opts.get(n) is not None]
    if len(given) != 1:
        raise UsageError("/".join(n.replace("_", "-") for n in names),
                         f"give exactly one (got {len(given) or 'none'})")
    return given[0]


def _validate_beta(o):
    src = _one_source(o, ("alpha", "beta", "preset"))
    if src == "preset":
        if o["preset"] not in C.PRESETS:
            raise UsageError("preset", f"expected one of {C.PRESETS}")
        if o["n"] is None or o["n"] < 1:
            raise UsageError("n", "preset needs n >= 1")
        if o["k"] is None or not 1 <= o["k"] <= o["n"]:
            raise UsageError("k", "preset needs 1 <= k <= n")


def _validate_identity(o):
    _positive(o, "samples")
    ns = o["n"] or ((3,) if o["quarter"] else (2, 3, 4, 5))
    if any(n < 1 for n in ns):
        raise UsageError("n", "dimensions must be >= 1")
    if o["quarter"]:
        ks = o["k"] or (1, 2, 3)
        if any(not 1 <= k <= n for k in ks for n in ns):
            raise UsageError("k", "need 1 <= k <= n")
    elif o["k"]:
        raise UsageError("k", "only used with --quarter")


def _validate_sharpness(o):
    _positive(o, "ks")
    if any(k <= 1 for k in o["ks"]):
        raise UsageError("ks", "cutoff parameters must exceed 1")
    _positive(o, "order")
    q = o["q"]
    if q == 1:
        if o["alpha"] is not None:
            raise UsageError("alpha", "q = 1 takes --beta-tail, not --alpha")
    else:
        a = o["alpha"] or (0.0, 0.0, 0.0)
        if not 2 <= q <= len(a):
            raise UsageError("q", f"need 1 <= q <= n = {len(a)}")
        if any(x > 0 for x in a):
            raise UsageError("alpha", "entries must be <= 0")
        if o["beta_tail"] is not None:
            raise UsageError("beta-tail", "only used with q = 1")


def _validate_sobolev(o):
    a = o["alpha"]
    if len(a) < 3:
        raise UsageError("alpha", "needs n >= 3 entries")
    if any(x > 0 for x in a):
        raise UsageError("alpha", "entries must be <= 0")
    _positive(o, "eps")
    _positive(o, "order")


def _validate_eigen(o):
    if o["n"] < 1 or not 1 <= o["k"] <= o["n"]:
        raise UsageError("k", "need 1 <= k <= n")
    _positive(o, "L")
    if o["grading"] < 1:
        raise UsageError("grading", "must be >= 1")
    try:
        fem.levels(o["refine"], o["finest"])
    except ValueError as exc:
        raise UsageError("refine/finest", str(exc)) from None


def _validate_l1(o):
    if o["n"] < 2:
        raise UsageError("n", "must be >= 2")
    _positive(o, "panels")
    _positive(o, "order")
    if o["concentration"] and o["n"] != 3:
        raise UsageError("concentration", "implemented for n = 3")


VALIDATORS: dict[str, Callable] = {
    "beta": _validate_beta, "identity": _validate_identity, "sharpness": _validate_sharpness,
    "sobolev-null": _validate_sobolev, "eigen": _validate_eigen, "l1": _validate_l1,
}


# --- commands ----------------------------------------------------------------
# each returns (rows, verdict, summary lines, invariants_ok)

def _fmt(v) -> str:
    return "(" + ", ".join(f"{float(x) + 0.0:.12g}" for x in v) + ")"


def cmd_beta(cfg: RunConfig):
    o = cfg.options
    if o["beta"] is not None:
        beta = np.asarray(o["beta"])
        adm = C.beta_admissible(beta)
        alpha = adm.alpha
    else:
        raw = o["alpha"] if o["alpha"] is not None else C.preset(o["preset"], o["k"], o["n"])
        alpha = C.normalize_alpha(raw)
        beta = C.alpha_to_beta(alpha)
        adm = C.beta_admissible(beta)
    n = beta.size
    verdict = {"admissible": adm.admissible, "failed_index": adm.failed_index,
               "radicand": adm.radicand,
               "status": "admissible" if adm.admissible else f"inadmissible at index {adm.failed_index}"}
    lines = [f"beta = {_fmt(beta)}",
             f"admissible: {'yes' if adm.admissible else f'no (index {adm.failed_index})'}"]
    ok = True
    rows = []
    if alpha is None:
        rows = [{"m": m, "beta": float(b)} for m, b in enumerate(beta, 1)]
        verdict["sobolev"] = None
        return rows, verdict, lines, ok
    gamma = C.gamma_from_alpha(alpha)
    lines += [f"alpha = {_fmt(alpha)}", f"gamma = {_fmt(gamma)}"]
    sig = C.sigma_and_c(gamma, n) if n >= 3 else None
    for m in range(n):
        r = {"m": m + 1, "beta": float(beta[m]), "alpha": float(alpha[m]), "gamma": float(gamma[m])}
        if sig is not None:
            r.update({"sigma": float(sig.sigma[m]), "c": float(sig.c[m]),
                      "c_closed": float(sig.c_closed[m]), "condition": bool(sig.condition[m])})
        rows.append(r)
    if sig is not None:
        sob = bool(alpha[-1] < -C.ZERO_TOL)
        verdict["sobolev"] = "yes" if sob else "no"
        verdict["sigma_condition"] = sig.holds
        lines += [f"sigma = {_fmt(sig.sigma)}", f"c = {_fmt(sig.c)}",
                  f"sobolev: {verdict['sobolev']}"]
    else:
        verdict["sobolev"] = "n/a"
        lines.append("sobolev: n/a (n < 3)")
    if o["check"] and o["beta"] is None:
        err = float(np.max(np.abs(alpha - adm.alpha) / np.maximum(1.0, np.abs(alpha))))
        verdict["roundtrip_error"] = err
        ok = err <= 1e-12
        lines.append(f"round-trip error: {err:.3g}")
    return rows, verdict, lines, ok


def cmd_identity(cfg: RunConfig):
    o = cfg.options
    rows, lines = [], []
    if o["quarter"]:
        for n in o["n"] or (3,):
            for k in o["k"] or (1, 2, 3):
                res = quarter_residual_suite(k, n, o["samples"], cfg.seed)
                rows.append({"family": "quarter", "n": n, "k": k, "samples": o["samples"],
                             "max_residual": float(np.max(res))})
    else:
        for n in o["n"] or (2, 3, 4, 5):
            res = residual_suite(n, o["samples"], cfg.seed)
            rows.append({"family": "half", "n": n, "k": None, "samples": o["samples"],
                         "max_residual": float(np.max(res))})
    worst = max(r["max_residual"] for r in rows)
    ok = worst <= o["threshold"]
    for r in rows:
        k = "" if r["k"] is None else f" k={r['k']}"
        lines.append(f"{r['family']} n={r['n']}{k}: max residual {r['max_residual']:.3e}")
    return rows, {"max_residual": worst, "threshold": o["threshold"], "pass": ok}, lines, ok


def _sweep_rows(summary: T.SweepSummary) -> list[dict]:
    return [r.row() for r in summary.reports]


def _sweep_verdict(s: T.SweepSummary) -> dict:
    vals = [r.value for r in s.reports]
    return {"target": s.target, "final_value": vals[-1], "final_gap": s.final_gap,
            "decreasing": s.decreasing, "floor_ok": s.floor_ok,
            "any_flagged": any(r.flagged for r in s.reports), **s.checks}


def cmd_sharpness(cfg: RunConfig):
    o = cfg.options
    if o["q"] == 1:
        tail = o["beta_tail"] or (0.25, 0.25)
        s = T.step1_sweep(tail, o["ks"], cfg.rule())
    else:
        s = T.general_sweep(o["q"], o["alpha"] or (0.0, 0.0, 0.0), o["ks"], cfg.rule())
    verdict = _sweep_verdict(s)
    ok = s.decreasing and s.floor_ok
    lines = [f"k={r.param:g}: Q={r.value:.6f} (change {r.error_estimate:.1e})" for r in s.reports]
    lines.append(f"target {s.target:g}, decreasing: {s.decreasing}, floor: {s.floor_ok}")
    return _sweep_rows(s), verdict, lines, ok


def cmd_sobolev_null(cfg: RunConfig):
    o = cfg.options
    s = T.sobolev_null_sweep(o["alpha"], o["eps"], cfg.rule())
    verdict = _sweep_verdict(s)
    verdict.pop("final_gap")
    null_case = abs(o["alpha"][-1]) <= C.ZERO_TOL
    ok = s.floor_ok and (s.decreasing or not null_case)
    lines = [f"eps={r.param:g}: quotient={r.value:.6f}" for r in s.reports]
    lines.append(f"log-log slope {s.checks['slope']:.4f}, min/max {s.checks['min_over_max']:.4f}")
    return _sweep_rows(s), verdict, lines, ok


def cmd_eigen(cfg: RunConfig):
    o = cfg.options
    k, n = o["k"], o["n"]
    res = fem.eigen_study(k, n, o["L"], o["refine"], o["finest"], o["grading"], o["tol"])
    rows = [dict(r.row(), study="eigen") for r in res]
    vals = [r.value for r in res]
    floor = k * k / 4.0
    above = all(v >= floor - 1e-8 for v in vals)
    nonincreasing = all(b <= a + 1e-10 for a, b in zip(vals, vals[1:]))
    verdict = {"target": floor, "final_value": vals[-1], "final_gap": (vals[-1] - floor) / floor,
               "lower_bound_ok": above, "nonincreasing": nonincreasing}
    lines = [f"N={r.N}: lambda={r.value:.9f} (residual {r.residual:.1e})" for r in res]
    ok = above and nonincreasing
    if o["psd"]:
        mesh = fem.BoxMesh(n=n, N=12, grading=o["grading"], graded_axes=n)
        half = fem.psd_check(mesh, C.alpha_to_beta(np.zeros(n)), o["tol"])
        qk = min(2, n)
        quarter = fem.quarter_psd_check(qk, n, fem.BoxMesh(n=n, N=12, positive=qk), tol=o["tol"])
        for name, p in (("psd alpha=0", half), (f"psd quarter k={qk}", quarter)):
            rows.append({"study": name, "n": n, "lambda": p.min_eig, "residual": p.eigen.residual,
                         "metric": p.metric})
            lines.append(f"{name}: min eig {p.min_eig:.6f}")
        verdict["psd_ok"] = half.nonnegative and quarter.nonnegative
        ok = ok and verdict["psd_ok"]
    lines.append(f"target {floor:g}, bound: {above}, non-increasing: {nonincreasing}")
    return rows, verdict, lines, ok


def cmd_l1(cfg: RunConfig):
    o = cfg.options
    rule = l1.BoxRule(panels=o["panels"], order=o["order"])
    res = l1.run_suite(o["n"], cfg.seed, rule)
    rows = [r.row() for r in res]
    holds = all(r.holds for r in res)
    stable = max(r.change for r in res) <= 5e-3
    # boundary cases of the step condition
    probe = l1.sample_library(o["n"], cfg.seed, fixed=1, random=0)[0]
    sigma_zero = (1.0,) + (0.0,) * (o["n"] - 1)
    skipped = l1.step_inequality_check(2, sigma_zero, probe, rule) is None
    try:
        l1.step_inequality_check(2, (-2.0, 1.0) + (0.0,) * (o["n"] - 2), probe, rule)
        refused = False
    except l1.ConditionViolation:
        refused = True
    verdict = {"rows": len(res), "all_hold": holds,
               "min_ratio": min(r.rhs / r.lhs for r in res if r.lhs > 0),
               "max_change": max(r.change for r in res), "resolution_stable": stable,
               "zero_sigma_skipped": skipped, "zero_c_refused": refused}
    lines = [f"{len(res)} checks, all hold: {holds}, min rhs/lhs {verdict['min_ratio']:.4f}, "
             f"max change {verdict['max_change']:.2e}",
             f"boundary cases: sigma_l = 0 skipped {skipped}, c_l = 0 refused {refused}"]
    if o["concentration"]:
        for label, alpha in (("alpha=0", (0.0, 0.0, 0.0)), ("alpha3=-1/2", (0.0, 0.0, -0.5))):
            trend = l1.concentration_trend(HalfSpaceField.from_alpha(alpha))
            for d, lhs, rhs, ratio in trend:
                rows.append({"check": "concentration", "params": label, "sample": f"delta={d:g}",
                             "lhs": lhs, "rhs": rhs, "ratio": ratio})
            lines.append(f"concentration {label}: " + ", ".join(f"{t[3]:.4f}" for t in trend))
    ok = holds and stable and skipped and refused
    return rows, verdict, lines, ok


COMMANDS = {"beta": cmd_beta, "identity": cmd_identity, "sharpness": cmd_sharpness,
            "sobolev-null": cmd_sobolev_null, "eigen": cmd_eigen, "l1": cmd_l1}


# --- parser ------------------------------------------------------------------

COMMON = ("config", "seed", "format", "out", "threads")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file with defaults")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=reports.FORMATS, default="csv")
    common.add_argument("--out", help=f"report path ('-' for stdout); default ${OUTPUT_ENV}/<command>.<format>")
    common.add_argument("--threads", type=int, help="cap on worker threads")

    p = argparse.ArgumentParser(prog="hardylab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("beta", parents=[common], help="constants for an alpha or beta vector")
    b.add_argument("--alpha", type=vector)
    b.add_argument("--beta", type=vector)
    b.add_argument("--preset", choices=C.PRESETS)
    b.add_argument("--k", type=int)
    b.add_argument("--n", type=int)
    b.add_argument("--check", action="store_true", help="also verify the alpha round trip")

    i = sub.add_parser("identity", parents=[common], help="residual of the potential identity")
    i.add_argument("--n", type=int_vector, help="dimensions (default 2,3,4,5; 3 with --quarter)")
    i.add_argument("--samples", type=int, default=1000)
    i.add_argument("--quarter", action="store_true")
    i.add_argument("--k", type=int_vector, help="quarter-space k values (default 1,2,3)")
    i.add_argument("--threshold", type=float, default=IDENTITY_THRESHOLD)

    s = sub.add_parser("sharpness", parents=[common], help="quotients along cutoff families")
    s.add_argument("--q", type=int, default=1)
    s.add_argument("--ks", type=vector, default=",".join(map(str, T.K_SCHEDULE)))
    s.add_argument("--beta-tail", type=vector, help="q = 1 only (default 0.25,0.25)")
    s.add_argument("--alpha", type=vector, help="q >= 2 only (default 0,0,0)")
    s.add_argument("--order", type=int, default=QuadratureRule.order)

    z = sub.add_parser("sobolev-null", parents=[common], help="critical-norm quotient in eps")
    z.add_argument("--alpha", type=vector, default="0,0,0")
    z.add_argument("--eps", type=vector, default=",".join(map(str, T.EPS_SCHEDULE)))
    z.add_argument("--order", type=int, default=QuadratureRule.order)

    e = sub.add_parser("eigen", parents=[common], help="finite element squeeze")
    e.add_argument("--k", type=int, default=1)
    e.add_argument("--n", type=int, default=3)
    e.add_argument("--L", type=float, default=4.0)
    e.add_argument("--refine", type=int, default=3)
    e.add_argument("--finest", type=int, default=24)
    e.add_argument("--grading", type=float, default=2.0)
    e.add_argument("--tol", type=float, default=1e-9)
    e.add_argument("--psd", action="store_true", help="also run the PSD checks")

    m = sub.add_parser("l1", parents=[common], help="weighted L1 inequalities on the library")
    m.add_argument("--n", type=int, default=3)
    m.add_argument("--panels", type=int, default=l1.BoxRule.panels)
    m.add_argument("--order", type=int, default=l1.BoxRule.order)
    m.add_argument("--concentration", action="store_true",
                   help="add the concentrating-cone trend rows")
    p._subs = {"beta": b, "identity": i, "sharpness": s, "sobolev-null": z, "eigen": e, "l1": m}
    return p


def _apply_file(parser, sub, path):
    values = read_config_file(path)
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help",)}
    for key, raw in values.items():
        if key in ("config", "command") or key not in actions:
            raise UsageError(key, "unknown config key for this command")
        act = actions[key]
        if act.nargs == 0:  # store_true flags
            try:
                sub.set_defaults(**{key: boolean(raw)})
            except argparse.ArgumentTypeError as exc:
                raise UsageError(key, str(exc)) from None
        else:
            sub.set_defaults(**{key: raw})  # argparse converts string defaults


_NUMBER_START = tuple("0123456789.")


def _normalize_argv(argv):
    """Glue ``--flag -0.5,0`` into ``--flag=-0.5,0``; argparse would read a
    leading minus as an option."""
    argv = list(sys.argv[1:] if argv is None else argv)
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else ""
        if (tok.startswith("--") and "=" not in tok and len(nxt) > 1
                and nxt[0] == "-" and nxt[1] in _NUMBER_START):
            out.append(f"{tok}={nxt}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def parse_config(argv) -> RunConfig:
    argv = _normalize_argv(argv)
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.config:
        _apply_file(parser, parser._subs[ns.command], ns.config)
        ns = parser.parse_args(argv)
    opts = {k: v for k, v in vars(ns).items() if k not in COMMON + ("command",)}
    cfg = RunConfig(ns.command, opts, ns.seed, ns.format, ns.out, ns.threads)
    cfg.validate()
    return cfg


def _destination(cfg: RunConfig) -> Optional[str]:
    if cfg.out:
        return cfg.out
    d = os.environ.get(OUTPUT_ENV)
    if d:
        return str(Path(d) / f"{cfg.command}.{cfg.fmt}")
    return None


@dataclass
class Outcome:
    rows: list
    verdict: dict
    lines: list
    ok: bool
    text: str


def execute(cfg: RunConfig) -> Outcome:
    """Run one suite and render its report without writing anything."""
    with threadpool_limits(limits=cfg.threads):
        rows, verdict, lines, ok = COMMANDS[cfg.command](cfg)
    verdict = dict(verdict, invariants_ok=bool(ok))
    return Outcome(rows, verdict, lines, bool(ok), reports.render(cfg.fmt, rows, cfg.echo(), verdict))


def run(cfg: RunConfig, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    res = execute(cfg)
    lines, ok, text = res.lines, res.ok, res.text
    dest = _destination(cfg)
    info = stderr if dest == "-" else stdout
    for line in lines:
        print(line, file=info)
    if dest == "-":
        stdout.write(text)
    elif dest:
        path = Path(dest)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        print(f"report: {path}", file=info)
    return EXIT_OK if ok else EXIT_VIOLATION


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0) and EXIT_USAGE
    except UsageError as exc:
        print(f"hardylab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return run(cfg)
    except (QuadratureError, fem.SolverStagnation, ArithmeticError, FloatingPointError) as exc:
        print(f"hardylab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"hardylab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"hardylab: cannot write report: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
