"""Byte-stable JSON: floats at 17 significant digits, infinities as strings, atomic writes."""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

__all__ = ["dumps_stable", "one_line", "write_atomic"]


def _num(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"-inf"' if x < 0 else '"inf"'
    if x == int(x) and abs(x) < 2 ** 53:
        return repr(float(x))
    return format(x, ".17g")


def dumps_stable(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with floats at 17 significant digits and infinities as strings."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _num(obj)
    if getattr(obj, "ndim", None) == 0 and hasattr(obj, "item"):
        return dumps_stable(obj.item(), indent, _level)
    if isinstance(obj, complex):
        return dumps_stable({"re": obj.real, "im": obj.imag}, indent, _level)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps_stable(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps_stable(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps_stable(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if hasattr(obj, "tolist"):
        return dumps_stable(obj.tolist(), indent, _level)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def one_line(obj) -> str:
    return dumps_stable(obj, indent=0).replace(",\n", ", ").replace("{\n", "{").replace("[\n", "[").replace("\n", "")


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
