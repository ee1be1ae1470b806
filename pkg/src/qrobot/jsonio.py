"""Deterministic JSON helpers shared by the trace, path and stats writers."""
from __future__ import annotations

import json

SIG_DIGITS = 12


def real(x: float) -> float:
    """Round to 12 significant digits; normalises -0.0."""
    v = float(f"{float(x):.{SIG_DIGITS}g}")
    return v + 0.0


def complex_record(z: complex) -> dict:
    z = complex(z)
    return {"re": real(z.real), "im": real(z.imag)}


def parse_complex(d) -> complex:
    return complex(float(d.get("re", 0.0)), float(d.get("im", 0.0)))


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def dumps_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"
