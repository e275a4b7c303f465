"""Pass/fail records shared by every property suite."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

PROPERTIES = (
    "SC",
    "LUC",
    "MLUC",
    "UC",
    "STRONG",
    "HUDZIK_EXTREME",
    "HUDZIK_STRONG_EXTREME",
    "HUDZIK_LUR",
    "DUALITY_ISOMETRY",
    "LATTICE",
)
STATUSES = ("pass", "fail", "skipped")


@dataclass
class PropertyVerdict:
    property: str
    status: str
    margin: float | None = None
    witness: dict[str, Any] | None = None
    budget: int | None = None
    seed: int | None = None
    tolerances: dict[str, float] = field(default_factory=dict)
    details: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.property not in PROPERTIES:
            raise ValueError(f"unknown property tag {self.property!r}")
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def failed(self) -> bool:
        return self.status == "fail"

    def to_dict(self) -> dict:
        return {
            "property": self.property,
            "status": self.status,
            "margin": self.margin,
            "witness": _jsonable(self.witness),
            "budget": self.budget,
            "seed": self.seed,
            "tolerances": dict(self.tolerances),
            "details": _jsonable(self.details),
        }


def _jsonable(obj):
    if obj is None:
        return None
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
