"""CSV and JSON report writers.

Reports are byte-reproducible: no timestamps, fixed key order, and floats
written with the shortest repr that round-trips.
"""
from __future__ import annotations

import csv
import io
import json
import math
from typing import Any, Mapping, Sequence

import numpy as np

SCHEMA_VERSION = 1
FORMATS = ("csv", "json")


def _scalar(v: Any) -> Any:
    """Plain Python value; non-finite floats become strings."""
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, np.ndarray):
        return [_scalar(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_scalar(x) for x in v]
    if isinstance(v, Mapping):
        return {str(k): _scalar(x) for k, x in v.items()}
    return v


def _cell(v: Any) -> str:
    v = _scalar(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ";".join(_cell(x) for x in v)
    return str(v)


def config_echo(config: Mapping[str, Any]) -> str:
    """Flat ``key=value`` echo of a config, space separated, in given order."""
    return " ".join(f"{k}={_cell(v)}" for k, v in config.items())


def to_csv(rows: Sequence[Mapping[str, Any]], config: Mapping[str, Any]) -> str:
    """Header row, then one line per row.

    Every row carries ``schema_version``, ``seed`` and the config echo, so a
    single line is self-describing.  Columns are the union of row keys in
    first-seen order.
    """
    columns: list[str] = []
    for r in rows:
        for k in r:
            if k not in columns:
                columns.append(k)
    header = ["schema_version", "seed"] + columns + ["config"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    echo = config_echo(config)
    seed = _cell(config.get("seed"))
    for r in rows:
        w.writerow([str(SCHEMA_VERSION), seed] + [_cell(r.get(c)) for c in columns] + [echo])
    return buf.getvalue()


def to_json(rows: Sequence[Mapping[str, Any]], config: Mapping[str, Any],
            verdict: Mapping[str, Any]) -> str:
    doc = {"config": _scalar(dict(config)), "schema_version": SCHEMA_VERSION,
           "rows": [_scalar(dict(r)) for r in rows], "verdict": _scalar(dict(verdict))}
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def render(fmt: str, rows, config, verdict) -> str:
    if fmt == "csv":
        return to_csv(rows, config)
    if fmt == "json":
        return to_json(rows, config, verdict)
    raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def read_csv(text: str) -> list[dict]:
    """Parse a report back into string-valued dicts (for round-trip checks)."""
    return list(csv.DictReader(io.StringIO(text)))
