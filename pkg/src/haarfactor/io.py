"""File formats.

Vectors: JSON, either a bare list of coefficients, ``{"coeffs": [...]}`` or
``{"vectors": [[...], ...]}``.

Operators: a one-line JSON header ``{"depth": N, "format": "dense-f64-le"}``
followed by the row-major little-endian float64 matrix, or a small JSON
document ``{"depth": N, "rows": [[...], ...]}``.

All JSON output uses sorted keys so equal inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .dyadic import depth_of, n_coeffs

DENSE = "dense-f64-le"


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if hasattr(o, "to_json"):
        return o.to_json()
    if hasattr(o, "numerator"):
        return str(o)
    return str(o)


def _finite(o):
    if isinstance(o, float) and not math.isfinite(o):
        return "inf" if o > 0 else ("-inf" if o < 0 else "nan")
    if isinstance(o, dict):
        return {str(k): _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    return o


def dumps(obj) -> str:
    plain = json.loads(json.dumps(obj, default=_default))
    return json.dumps(_finite(plain), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_text(text: str, path=None):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def to_csv(obj) -> str:
    """Flatten a report: a list of flat dicts becomes a table, anything else
    becomes ``key,value`` rows with dotted keys."""
    buf = io.StringIO()
    if isinstance(obj, list) and obj and all(isinstance(r, dict) for r in obj):
        rows = [dict(_flatten(r)) for r in obj]
        keys = sorted({k for r in rows for k in r})
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
    else:
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["key", "value"])
        for k, v in _flatten(json.loads(dumps(obj))):
            w.writerow([k, v])
    return buf.getvalue()


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _flatten(obj[k], f"{prefix}{k}.")
    elif isinstance(obj, list) and any(isinstance(v, (dict, list)) for v in obj):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}{i}.")
    elif isinstance(obj, list):
        yield prefix[:-1], " ".join(str(v) for v in obj)
    else:
        yield prefix[:-1], obj


def emit(obj, path=None, fmt: str = "json"):
    write_text(to_csv(obj) if fmt == "csv" else dumps(obj), path)


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def read_vectors(path) -> list[np.ndarray]:
    obj = read_json(path)
    if isinstance(obj, dict):
        obj = obj["vectors"] if "vectors" in obj else [obj["coeffs"]]
    elif obj and not isinstance(obj[0], list):
        obj = [obj]
    vecs = [np.asarray(v, dtype=float) for v in obj]
    for v in vecs:
        depth_of(len(v))
    return vecs


def write_operator(A, path, fmt: str = DENSE):
    A = np.asarray(A, dtype="<f8")
    N = depth_of(A.shape[0])
    if A.shape != (n_coeffs(N), n_coeffs(N)):
        raise ValueError("operator files hold square matrices")
    if fmt == "json":
        Path(path).write_text(dumps({"depth": N, "rows": A.tolist()}))
        return
    with open(path, "wb") as fh:
        fh.write((json.dumps({"depth": N, "format": DENSE}, sort_keys=True) + "\n").encode())
        fh.write(np.ascontiguousarray(A).tobytes())


def read_operator(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    head, _, rest = raw.partition(b"\n")
    header = json.loads(head)
    if header.get("format") == DENSE:
        d = n_coeffs(int(header["depth"]))
        if len(rest) != 8 * d * d:
            raise ValueError(f"payload has {len(rest)} bytes, expected {8 * d * d}")
        return np.frombuffer(rest, dtype="<f8").reshape(d, d).copy()
    obj = json.loads(raw)
    A = np.asarray(obj["rows"], dtype=float)
    d = n_coeffs(int(obj["depth"]))
    if A.shape != (d, d):
        raise ValueError(f"rows have shape {A.shape}, expected {(d, d)}")
    return A
