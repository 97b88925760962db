"""Plain-text tables: CSV with a one-line ``# columns:`` header, flat JSON records."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

SIG_DIGITS = 9


def fmt(x) -> str:
    """Locale-independent number formatting with 9 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    s = f"{x:.{SIG_DIGITS}g}"
    return "0" if s == "-0" else s


def render_csv(columns: dict) -> str:
    names = list(columns)
    cols = [list(columns[n]) for n in names]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns differ in length")
    lines = ["# columns: " + ",".join(names)]
    for i in range(n):
        lines.append(",".join(fmt(c[i]) for c in cols))
    return "\n".join(lines) + "\n"


def write_csv(path, columns: dict) -> Path:
    path = Path(path)
    path.write_text(render_csv(columns), encoding="utf-8", newline="\n")
    return path


def read_csv(path) -> dict:
    """Inverse of :func:`write_csv`; numeric columns become float arrays."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or not text[0].startswith("# columns:"):
        raise ValueError(f"{path}: missing '# columns:' header")
    names = [c.strip() for c in text[0][len("# columns:"):].split(",")]
    rows = [ln.split(",") for ln in text[1:] if ln.strip() and not ln.startswith("#")]
    for k, r in enumerate(rows):
        if len(r) != len(names):
            raise ValueError(f"{path}: row {k + 2} has {len(r)} fields, expected {len(names)}")
    out = {}
    for j, n in enumerate(names):
        vals = [r[j] for r in rows]
        try:
            out[n] = np.array([float(v) for v in vals])
        except ValueError:
            out[n] = vals
    return out


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        x = float(v)
        return float(fmt(x)) if math.isfinite(x) else fmt(x)
    return v


def render_json(record: dict) -> str:
    return json.dumps(_jsonable(record), indent=2, sort_keys=True) + "\n"


def write_json(path, record: dict) -> Path:
    path = Path(path)
    path.write_text(render_json(record), encoding="utf-8", newline="\n")
    return path
