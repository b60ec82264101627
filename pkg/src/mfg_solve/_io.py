"""Small output helpers shared by the CSV writers."""

from __future__ import annotations

import math


def fmt(value) -> str:
    """17 significant digits: lossless float round-trip."""
    v = float(value)
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def fmt_row(*values):
    return [fmt(v) for v in values]
