"""Per-condition check records shared by the certificate modules."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

MARGINAL_BAND = 1e-7


@dataclass
class Condition:
    """One checked inequality or identity.

    ``slack`` is normalized so that ``slack >= 0`` means satisfied
    (a relative minimum eigenvalue, or minus a relative residual).
    """
    name: str
    slack: float
    passed: bool
    strict: bool = False
    marginal: bool = False
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "slack": _num(self.slack), "passed": self.passed,
                "strict": self.strict, "marginal": self.marginal, "detail": self.detail}


def nonstrict(name, slack, tol, detail="") -> Condition:
    return Condition(name, float(slack), bool(slack >= -tol), False,
                     bool(-tol <= slack < MARGINAL_BAND), detail)


def strict(name, slack, margin, tol, detail="") -> Condition:
    # a strict inequality that only holds up to the tolerance is "marginal" and fails
    return Condition(name, float(slack), bool(slack >= margin), True,
                     bool(-tol <= slack < margin), detail)


def residual(name, rel_residual, tol, detail="") -> Condition:
    return Condition(name, -float(rel_residual), bool(rel_residual <= tol), False,
                     False, detail)


def flag(name, ok: bool, detail="") -> Condition:
    return Condition(name, 0.0 if ok else -1.0, bool(ok), False, False, detail)


@dataclass
class CheckReport:
    conditions: list = field(default_factory=list)
    data: dict = field(default_factory=dict)
    certificate: Any = None  # certificate object, when the check produced one

    def add(self, cond: Condition) -> Condition:
        self.conditions.append(cond)
        return cond

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    # GAS verdicts read better with this name
    certified = passed

    @property
    def marginal(self) -> bool:
        return any(c.marginal for c in self.conditions)

    def failed(self) -> list:
        return [c.name for c in self.conditions if not c.passed]

    def __getitem__(self, name) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "marginal": self.marginal,
                "failed": self.failed(),
                "conditions": [c.to_dict() for c in self.conditions],
                "data": {k: _jsonable(v) for k, v in self.data.items()}}

    def summary(self) -> str:
        lines = []
        for c in self.conditions:
            mark = "ok  " if c.passed else "FAIL"
            extra = " (marginal)" if c.marginal else ""
            lines.append(f"  [{mark}] {c.name}: slack {c.slack:+.3e}{extra}")
        return "\n".join(lines)


def _num(x):
    x = float(x)
    if np.isnan(x):
        return None
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _jsonable(v: Any):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, float)):
        return _num(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v
