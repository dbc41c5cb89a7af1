"""Selection outcomes shared by the screening engine and the one-shot baseline."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

__all__ = ["AuditEvent", "SelectionResult"]


@dataclass(frozen=True)
class AuditEvent:
    step: int
    event: str
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"step": self.step, "event": self.event, "payload": self.payload}


@dataclass(frozen=True)
class SelectionResult:
    """Final selection plus the full decision trail of the run."""

    selected: frozenset[int]
    T: int
    alpha: float
    seed: int
    fdp_trajectory: tuple[tuple[int, float], ...]
    audit: tuple[AuditEvent, ...]

    def to_dict(self) -> dict:
        return {
            "selected": sorted(self.selected),
            "T": self.T,
            "alpha": self.alpha,
            "seed": self.seed,
            "trajectory": [[step, value] for step, value in self.fdp_trajectory],
            "audit": [e.to_dict() for e in self.audit],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")
