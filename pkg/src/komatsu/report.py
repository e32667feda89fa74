"""Deterministic JSON reports.

Floats are written with 17 significant digits, integers beyond 2^53 and
fractions as decimal strings, non-finite floats as the strings "inf", "-inf"
and "nan". Keys are sorted, so equal inputs give byte-identical files.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

SCHEMA_VERSION = "1.0"
_BIG = 1 << 53


def int_text(v: int) -> str:
    """Decimal string of an integer; beyond about 3900 digits only its size."""
    if v.bit_length() > 13000:
        return f"<integer with about {int(v.bit_length() * math.log10(2)) + 1} digits>"
    return str(v)


def _float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _enc(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        v = int(obj)
        if abs(v) <= _BIG:
            return str(v)
        return _string(int_text(v))
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, Fraction):
        return _string(str(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return _enc([obj.real, obj.imag], indent, level)
    if isinstance(obj, str):
        return _string(obj)
    if isinstance(obj, np.ndarray):
        return _enc(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = sorted((str(k), v) for k, v in obj.items())
        body = (",\n").join(f"{pad}{_string(k)}: {_enc(v, indent, level + 1)}" for k, v in items)
        return "{\n" + body + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(x, (int, float, np.integer, np.floating, str, bool)) or x is None for x in obj):
            return "[" + ", ".join(_enc(x, indent, level + 1) for x in obj) + "]"
        body = (",\n").join(pad + _enc(x, indent, level + 1) for x in obj)
        return "[\n" + body + "\n" + end + "]"
    if hasattr(obj, "to_dict"):
        return _enc(obj.to_dict(), indent, level)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _string(s: str) -> str:
    import json

    return json.dumps(s, ensure_ascii=False)


def dumps(obj, indent: int = 2) -> str:
    return _enc(obj, indent, 0) + "\n"


def digest_bytes(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def digest_file(path) -> str:
    with open(path, "rb") as fh:
        return digest_bytes(fh.read())


@dataclass
class RunManifest:
    command: str
    inputs: dict = field(default_factory=dict)
    truncation: dict = field(default_factory=dict)
    precision_bits: int = 256
    tool_version: str = ""
    wall_time: float | None = None
    backend: str = ""

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "inputs": self.inputs,
            "truncation": self.truncation,
            "precision_bits": self.precision_bits,
            "tool_version": self.tool_version,
            "wall_time": self.wall_time,
            "backend": self.backend,
        }


def write_report(path, manifest: RunManifest, body: dict) -> str:
    text = dumps({"manifest": manifest, "report": body})
    if path is None or path == "-":
        return text
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return text
