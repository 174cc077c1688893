"""Aggregate navigation metrics: Success, SEL, SC, CR, Safe Episode.

Per episode i: success S_i, steps taken L_i, expert steps for the same
episode L*_i, collisions c_i.

  SC  = (1/N) sum S_i / (1 + c_i)
  SEL = (1/N) sum S_i * L*_i / max(L_i, L*_i)
  CR  = mean of c_i / L_i (macro-averaged over episodes; the alternative,
        total collisions / total steps, is not used here)
  Safe Episode = fraction of episodes with c_i = 0
"""

from __future__ import annotations

import json
from dataclasses import dataclass


@dataclass(frozen=True)
class EpisodeRecord:
    success: bool
    steps: int
    expert_steps: int
    collisions: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.expert_steps < 1:
            raise ValueError("expert_steps must be >= 1")
        if not 0 <= self.collisions <= self.steps:
            raise ValueError("collisions must be in [0, steps]")

    def to_dict(self) -> dict:
        return {"collisions": self.collisions, "expert_steps": self.expert_steps,
                "steps": self.steps, "success": self.success}

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeRecord":
        return cls(success=bool(d["success"]), steps=int(d["steps"]),
                   expert_steps=int(d["expert_steps"]),
                   collisions=int(d["collisions"]))


@dataclass(frozen=True)
class MetricsSummary:
    n: int
    success_rate: float
    sel: float
    sc: float
    collision_rate: float
    safe_episode_rate: float

    def to_dict(self) -> dict:
        return {"collision_rate": self.collision_rate, "n": self.n,
                "safe_episode_rate": self.safe_episode_rate, "sc": self.sc,
                "sel": self.sel, "success_rate": self.success_rate}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_table(self) -> str:
        rows = [("episodes", f"{self.n}"),
                ("success_rate", f"{self.success_rate:.4f}"),
                ("sel", f"{self.sel:.4f}"),
                ("sc", f"{self.sc:.4f}"),
                ("collision_rate", f"{self.collision_rate:.4f}"),
                ("safe_episode_rate", f"{self.safe_episode_rate:.4f}")]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _require_nonempty(records) -> list:
    records = list(records)
    if not records:
        raise ValueError("metrics require at least one episode record")
    return records


def success_rate(records) -> float:
    records = _require_nonempty(records)
    return sum(1.0 for r in records if r.success) / len(records)


def sc(records) -> float:
    """Success weighted by collision count."""
    records = _require_nonempty(records)
    return sum(1.0 / (1 + r.collisions) for r in records if r.success) / len(records)


def sel(records) -> float:
    """Success weighted by episode length against the expert's length."""
    records = _require_nonempty(records)
    return sum(r.expert_steps / max(r.steps, r.expert_steps)
               for r in records if r.success) / len(records)


def collision_rate(records) -> float:
    records = _require_nonempty(records)
    return sum(r.collisions / r.steps for r in records) / len(records)


def safe_episode_rate(records) -> float:
    records = _require_nonempty(records)
    return sum(1.0 for r in records if r.collisions == 0) / len(records)


def aggregate(records) -> MetricsSummary:
    records = _require_nonempty(records)
    return MetricsSummary(n=len(records),
                          success_rate=success_rate(records),
                          sel=sel(records), sc=sc(records),
                          collision_rate=collision_rate(records),
                          safe_episode_rate=safe_episode_rate(records))
