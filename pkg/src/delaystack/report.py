"""Certificate outcome record and its JSON form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np


def to_jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats into plain JSON values."""
    if isinstance(obj, CertificateReport):
        return obj.to_dict()
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return obj


@dataclass
class CertificateReport:
    check: str
    passed: bool
    margin: float
    witness: dict | None = None
    resolution: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.passed)

    def to_dict(self) -> dict:
        out = {
            "check": self.check,
            "pass": bool(self.passed),
            "margin": to_jsonable(self.margin),
            "witness": to_jsonable(self.witness),
            "resolution": to_jsonable(self.resolution),
            "parameters": to_jsonable(self.parameters),
        }
        if self.details:
            out["details"] = to_jsonable(self.details)
        return out

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=False)


def combine(check: str, reports: Iterable[CertificateReport], **parameters) -> CertificateReport:
    """All-of aggregation: passes iff every part passes; margin is the worst part margin."""
    reports = list(reports)
    worst = min(reports, key=lambda r: r.margin, default=None)
    failing = next((r for r in reports if not r.passed), None)
    return CertificateReport(
        check=check,
        passed=all(r.passed for r in reports),
        margin=float("inf") if worst is None else worst.margin,
        witness=None if failing is None else {"check": failing.check, **(failing.witness or {})},
        resolution={"parts": len(reports)},
        parameters=parameters,
        details={"parts": [r.to_dict() for r in reports]},
    )
