"""Which mixtures raise or lower a field's score within one reweighting step."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import TrajectoryRecord
from ..errors import DimensionMismatch, EmptyPartition


@dataclass
class StepAnalysis:
    increase: np.ndarray | None  # mean distribution of steps that raised the field score
    decrease: np.ndarray | None
    n_increase: int
    n_decrease: int
    n_zero: int  # exactly unchanged steps, assigned to neither side

    def require(self, side: str) -> np.ndarray:
        v = getattr(self, side)
        if v is None:
            raise EmptyPartition(f"no step falls on the {side} side")
        return v


def analyze_trajectories(trajectories: Sequence[TrajectoryRecord], field: int) -> StepAnalysis:
    """Average the step distributions grouped by the sign of the field's score change."""
    inc, dec, zero = [], [], 0
    for t in trajectories:
        fb = t.require_feedback()
        if not 0 <= field < fb.shape[1]:
            raise DimensionMismatch(f"field index {field} out of range for {fb.shape[1]} fields")
        delta = np.diff(fb[:, field])
        for a, d in zip(t.actions, delta):
            if d > 0:
                inc.append(a)
            elif d < 0:
                dec.append(a)
            else:
                zero += 1

    def mean(rows):
        return np.mean(np.array(rows), axis=0) if rows else None

    return StepAnalysis(mean(inc), mean(dec), len(inc), len(dec), zero)
