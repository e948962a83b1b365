"""JSON and CSV helpers for operators, tensors and run records."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def complex_to_nested(a):
    """Complex array -> nested lists with ``[re, im]`` leaves."""
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def nested_to_complex(obj):
    arr = np.asarray(obj, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("expected [re, im] pairs in the innermost level")
    return arr[..., 0] + 1j * arr[..., 1]


def operator_to_json(H, g=None):
    out = {"kind": "curvature_operator", "H": complex_to_nested(H)}
    if g is not None:
        out["g"] = complex_to_nested(g)
    return out


def operator_from_json(obj):
    H = nested_to_complex(obj["H"])
    g = nested_to_complex(obj["g"]) if "g" in obj else None
    return H, g


def indexed_to_json(omega4):
    return {"kind": "indexed_curvature", "T4": complex_to_nested(omega4)}


def indexed_from_json(obj):
    return nested_to_complex(obj["T4"])


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(x, (np.floating,)):
        return _jsonable(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])
