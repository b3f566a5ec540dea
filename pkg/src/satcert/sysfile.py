"""System files and reports (JSON).

A system file is

    {"schema_version": 1, "n": 2, "m": 1,
     "A0": [[0, 1], [0, 0]], "B": [[0], [1]], "K": [[1, 1]],
     "limits": {"lower": [-1], "upper": [1]}, "labels": ["x", "v"]}

``n``, ``m``, ``limits``, ``labels`` and ``schema_version`` are optional.
For one input, ``B`` may be a flat column and ``K`` a flat row.
"""
from __future__ import annotations

import hashlib
import json
import math
import re

import numpy as np

from .satmodel import SatLimits, SaturatedSystem

SCHEMA_VERSION = 1
SYSTEM_FIELDS = ("schema_version", "kind", "n", "m", "A0", "B", "K", "limits", "labels")


class InputError(ValueError):
    """Rejected input; the message names the file, line and field."""


def _line_of(text, key):
    if text is None:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _where(source, text, key):
    line = _line_of(text, key)
    return f"{source}:{line}: field '{key}'" if line else f"{source}: field '{key}'"


def _matrix(value, key, where, rows=None, cols=None, flat=None):
    """Numeric finite matrix from nested lists; ``flat`` ("col" or "row")
    accepts a flat list as a single column or row."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [[value]]
    if not isinstance(value, list) or not value:
        raise InputError(f"{where}: expected a non-empty list of rows")
    if all(not isinstance(v, list) for v in value):
        if flat == "col":
            value = [[v] for v in value]
        elif flat == "row":
            value = [value]
        else:
            raise InputError(f"{where}: expected a list of rows (nested lists)")
    out = []
    width = None
    for i, row in enumerate(value):
        if not isinstance(row, list):
            raise InputError(f"{where}: row {i + 1} is not a list")
        if width is None:
            width = len(row)
        if len(row) != width:
            raise InputError(f"{where}: row {i + 1} has {len(row)} entries, row 1 has {width}")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise InputError(f"{where}: entry ({i + 1},{j + 1}) is not a number: {v!r}")
            if not math.isfinite(v):
                raise InputError(f"{where}: entry ({i + 1},{j + 1}) is not finite")
        out.append([float(v) for v in row])
    M = np.array(out, dtype=float)
    if rows is not None and M.shape[0] != rows:
        raise InputError(f"{where}: has {M.shape[0]} rows, expected {rows}")
    if cols is not None and M.shape[1] != cols:
        raise InputError(f"{where}: has {M.shape[1]} columns, expected {cols}")
    return M


def _vector(value, key, where, length):
    if not isinstance(value, list) or any(isinstance(v, bool) or not isinstance(v, (int, float))
                                          for v in value):
        raise InputError(f"{where}: expected a list of numbers")
    if len(value) != length:
        raise InputError(f"{where}: has {len(value)} entries, expected {length}")
    return np.array(value, dtype=float)


def system_from_dict(d, source="<input>", text=None) -> SaturatedSystem:
    if not isinstance(d, dict):
        raise InputError(f"{source}: top level must be a JSON object")
    unknown = sorted(set(d) - set(SYSTEM_FIELDS))
    if unknown:
        raise InputError(f"{_where(source, text, unknown[0])}: unknown field "
                         f"(allowed: {', '.join(SYSTEM_FIELDS)})")
    ver = d.get("schema_version", SCHEMA_VERSION)
    if ver != SCHEMA_VERSION:
        raise InputError(f"{_where(source, text, 'schema_version')}: unsupported version {ver!r}")
    for key in ("A0", "B", "K"):
        if key not in d:
            raise InputError(f"{source}: missing required field '{key}'")
    for key in ("n", "m"):
        if key in d and (isinstance(d[key], bool) or not isinstance(d[key], int) or d[key] < 1):
            raise InputError(f"{_where(source, text, key)}: must be a positive integer")
    w = lambda k: _where(source, text, k)
    A0 = _matrix(d["A0"], "A0", w("A0"), rows=d.get("n"), cols=d.get("n"))
    n = A0.shape[0]
    if A0.shape[1] != n:
        raise InputError(f"{w('A0')}: must be square, got {A0.shape[0]}x{A0.shape[1]}")
    B = _matrix(d["B"], "B", w("B"), rows=n, cols=d.get("m"), flat="col")
    m = B.shape[1]
    K = _matrix(d["K"], "K", w("K"), rows=m, cols=n, flat="row")
    limits = None
    if "limits" in d:
        lim = d["limits"]
        if not isinstance(lim, dict) or set(lim) - {"lower", "upper"}:
            raise InputError(f"{w('limits')}: expected {{\"lower\": [...], \"upper\": [...]}}")
        lo = _vector(lim.get("lower", [-1.0] * m), "lower", w("limits") + ".lower", m)
        hi = _vector(lim.get("upper", [1.0] * m), "upper", w("limits") + ".upper", m)
        try:
            limits = SatLimits(lo, hi)
        except ValueError as e:
            raise InputError(f"{w('limits')}: {e}") from None
    labels = d.get("labels", ())
    if labels and (not isinstance(labels, list) or len(labels) != n
                   or not all(isinstance(s, str) for s in labels)):
        raise InputError(f"{w('labels')}: expected {n} strings")
    return SaturatedSystem(A0, B, K, limits, tuple(labels))


def parse_system(text, source="<input>") -> SaturatedSystem:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"{source}:{e.lineno}:{e.colno}: malformed JSON: {e.msg}") from None
    return system_from_dict(d, source, text)


def load_system(path) -> SaturatedSystem:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise InputError(f"{path}: cannot read: {e.strerror}") from None
    return parse_system(text, str(path))


def system_to_dict(sys: SaturatedSystem) -> dict:
    d = {"schema_version": SCHEMA_VERSION, "n": sys.n, "m": sys.m,
         "A0": sys.A0.tolist(), "B": sys.B.tolist(), "K": sys.K.tolist(),
         "limits": {"lower": sys.limits.lower.tolist(), "upper": sys.limits.upper.tolist()}}
    if sys.labels:
        d["labels"] = list(sys.labels)
    return d


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, shortest round-trip floats."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def input_hash(sys: SaturatedSystem) -> str:
    canon = json.dumps(system_to_dict(sys), sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canon.encode()).hexdigest()


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise InputError(f"{path}: cannot read: {e.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}:{e.lineno}:{e.colno}: malformed JSON: {e.msg}") from None
