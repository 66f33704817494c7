"""CSV and JSON writers with provenance headers."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .core import Params


def _version() -> str:
    from . import __version__

    return __version__


def header_lines(params: Params | None, extra: dict | None = None) -> list[str]:
    lines = [f"# qsmooth {_version()}"]
    if params is not None:
        lines.append(f"# config_hash {params.config_hash()}")
        lines.append("# config " + json.dumps(params.to_dict(), sort_keys=True))
    for k, v in (extra or {}).items():
        lines.append(f"# {k} {v}")
    return lines


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def write_csv(path, columns: dict, params: Params | None = None, extra: dict | None = None) -> Path:
    """Write equal-length columns with a ``#``-comment provenance header.

    Floats are written with ``repr`` so files round-trip exactly and are
    byte-identical across runs with the same inputs.
    """
    path = Path(path)
    names = list(columns)
    arrays = [np.asarray(columns[n]) if not isinstance(columns[n], list) else columns[n] for n in names]
    n = {len(a) for a in arrays}
    if len(n) > 1:
        raise ValueError(f"columns differ in length: {dict(zip(names, map(len, arrays)))}")
    buf = io.StringIO()
    buf.write("\n".join(header_lines(params, extra)) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*arrays):
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def write_pdf_snapshots(path, grid, rows, times, params: Params | None = None, kind: str = "smoothed") -> Path:
    """Densities over theta at selected times: one ``theta`` column and one
    column per time, named ``t=<time>``."""
    cols = {"theta": np.asarray(grid)}
    for t, row in zip(times, rows):
        cols[f"t={t:g}"] = np.asarray(row)
    return write_csv(path, cols, params, {"density": kind})


def read_csv(path) -> tuple[dict, dict]:
    """Columns (as float arrays where possible) and header metadata."""
    meta = {}
    body = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, val = line[2:].partition(" ")
            meta[key] = val
        else:
            body.append(line)
    rows = list(csv.reader(body))
    names = rows[0]
    cols = {}
    for i, n in enumerate(names):
        vals = [r[i] for r in rows[1:]]
        try:
            cols[n] = np.array([float(v) for v in vals])
        except ValueError:
            cols[n] = vals
    return cols, meta


def write_json(path, data: dict, params: Params | None = None) -> Path:
    path = Path(path)
    payload = {"version": _version()}
    if params is not None:
        payload["config_hash"] = params.config_hash()
        payload["config"] = params.to_dict()
    payload.update(data)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serializable: {type(o).__name__}")
