"""Shared check-report type and JSON conversion helpers."""

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class Check:
    """Outcome of one verifiable bound.

    ``measured`` holds the numbers behind the verdict; ``witness`` is the
    first violating datum when ``passed`` is false.
    """

    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    witness: Optional[dict] = None
    note: str = ""

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}"


def jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_json"):
            return obj.to_json()
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "to_json"):
        return obj.to_json()
    return obj


def dumps(obj):
    return json.dumps(jsonable(obj), indent=2, sort_keys=False) + "\n"


def sig(x, digits=12):
    """Round to ``digits`` significant digits for stable report output."""
    return float(f"{float(x):.{digits}g}")
