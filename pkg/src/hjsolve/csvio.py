"""CSV files with one '#'-prefixed JSON metadata line.

Layout::

    # {"config": ..., "seed": ..., "created": ...}
    col_a,col_b,...
    1.5,0.30000000000000004,...

Floats are written with ``repr`` (shortest decimal that round-trips to the
same 64-bit value), so re-reading reproduces the numbers bit for bit.
"""
from __future__ import annotations

import datetime as _dt
import json
import math

import numpy as np


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    f = float(v)
    if math.isnan(f):
        return "nan"
    if math.isinf(f):
        return "inf" if f > 0 else "-inf"
    return repr(f)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def metadata_line(meta, timestamp=True):
    meta = dict(meta)
    if timestamp:
        meta["created"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return "# " + json.dumps(meta, sort_keys=True, default=_json_default)


def write_csv(path, columns, rows, meta=None, timestamp=True):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(metadata_line(meta or {}, timestamp) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")


def read_csv(path):
    """Return ``(meta, columns, data)`` with ``data`` a float array of shape (rows, cols)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    meta = {}
    if lines and lines[0].startswith("#"):
        meta = json.loads(lines[0][1:].strip() or "{}")
        lines = lines[1:]
    if not lines:
        raise ValueError(f"{path}: no header row")
    columns = lines[0].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]], dtype=float)
    return meta, columns, data.reshape(-1, len(columns))


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def grid_function_rows(U):
    """Rows ``(i_0, ..., i_{d-1}, value)`` in lexicographic multi-index order."""
    U = np.asarray(U)
    idx = np.indices(U.shape).reshape(U.ndim, -1).T
    return [tuple(int(i) for i in ix) + (float(v),) for ix, v in zip(idx, U.ravel())]
