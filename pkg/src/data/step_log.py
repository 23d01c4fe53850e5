"""
Per-step simulation records and their tabular form.

Column order: t, status, flagged, task_error, u_norm, q_i..., qd_i..., u_i...,
err:<constraint tag>..., phi:<cone name>..., then solve_time when timing is on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd


@dataclass(frozen=True)
class StepRecord:
    t: float
    q: np.ndarray
    qdot: np.ndarray
    command: np.ndarray
    task_error: float
    status: str
    flagged: bool
    errors: dict[str, float] = field(default_factory=dict)
    angles: dict[str, float] = field(default_factory=dict)
    solve_time: float = 0.0
    message: str = ""


class StepLog:
    """One record per executed step."""

    def __init__(self, timing: bool = False):
        self.timing = timing
        self.records: list[StepRecord] = []

    def append(self, record: StepRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, index: int) -> StepRecord:
        return self.records[index]

    @property
    def flagged_steps(self) -> int:
        return sum(1 for r in self.records if r.flagged)

    def to_dataframe(self) -> pd.DataFrame:
        if not self.records:
            return pd.DataFrame(columns=["t", "status", "flagged", "task_error", "u_norm"])
        rows = []
        for r in self.records:
            row: dict[str, object] = {
                "t": r.t,
                "status": r.status,
                "flagged": r.flagged,
                "task_error": r.task_error,
                "u_norm": float(np.linalg.norm(r.command)),
            }
            row.update({f"q_{i}": v for i, v in enumerate(r.q)})
            row.update({f"qd_{i}": v for i, v in enumerate(r.qdot)})
            row.update({f"u_{i}": v for i, v in enumerate(r.command)})
            row.update({f"err:{tag}": v for tag, v in r.errors.items()})
            row.update({f"phi:{name}": v for name, v in r.angles.items()})
            if self.timing:
                row["solve_time"] = r.solve_time
            rows.append(row)
        return pd.DataFrame(rows)

    def write_csv(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_dataframe().to_csv(path, index=False)
        return path
