"""Deterministic text output: 17 significant digits, explicit infinities."""

from __future__ import annotations

import json
import math

import numpy as np


def fmt(x) -> str:
    """17 significant digits; '+inf'/'-inf'/'nan' spelled out, None as empty."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "+inf" if x > 0 else "-inf"
    return format(x, ".17g")


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with floats at 17 significant digits and non-finite floats as strings."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        s = fmt(obj)
        return s if math.isfinite(obj) else json.dumps(s)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{to_json(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def parse_float(s) -> float:
    """Inverse of ``fmt`` for numeric fields."""
    if isinstance(s, (int, float)):
        return float(s)
    return float(s.replace("+inf", "inf"))
