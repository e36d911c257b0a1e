"""Step-size schedules for iterative sign attacks.

A schedule distributes the perturbation budget ``epsilon`` over ``steps``
iterations: the raw sequence of a family is normalized so the step sizes sum
to ``epsilon`` exactly (up to rounding), which keeps the final iterate inside
the budget whenever no clipping binds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FAMILIES = ("constant", "log", "linear", "power", "exp")
DIRECTIONS = ("increasing", "decreasing")

# exp(k) overflows float64 past this many iterations
_MAX_EXP_STEPS = 700


@dataclass(frozen=True)
class ScheduleSpec:
    """Schedule family + direction + horizon + budget.

    ``log_base`` only affects the log family; the normalized schedule is
    invariant to it (changing the base rescales the raw sequence by a positive
    constant).
    """

    family: str
    steps: int
    epsilon: float
    direction: str = "increasing"
    log_base: float = math.e

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown schedule family {self.family!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown schedule direction {self.direction!r}")
        if not isinstance(self.steps, int) or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps!r}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.family == "log" and not self.log_base > 1.0:
            raise ValueError(f"log_base must exceed 1, got {self.log_base}")
        if self.family == "exp" and self.steps > _MAX_EXP_STEPS:
            raise ValueError(f"exp schedule overflows float64 for steps={self.steps}")


def raw_sequence(spec: ScheduleSpec) -> np.ndarray:
    """Unnormalized step-size sequence of length ``spec.steps``.

    Decreasing sequences evaluate the family generator on T, T-1, ..., 1
    (log uses T+1, ..., 2 so no step degenerates to zero); increasing
    sequences are the exact reversal. The constant family is all ones.
    """
    spec.validate()
    t = spec.steps
    if spec.family == "constant":
        return np.ones(t, dtype=np.float64)
    if spec.family == "log":
        args = np.arange(t + 1, 1, -1, dtype=np.float64)
        seq = np.log(args) / math.log(spec.log_base)
    else:
        args = np.arange(t, 0, -1, dtype=np.float64)
        if spec.family == "linear":
            seq = args
        elif spec.family == "power":
            seq = args**2
        else:  # exp
            seq = np.exp(args)
    if spec.direction == "increasing":
        seq = seq[::-1]
    return np.ascontiguousarray(seq)


def normalized_schedule(spec: ScheduleSpec) -> np.ndarray:
    """Step sizes summing to ``spec.epsilon``; order follows ``raw_sequence``."""
    raw = raw_sequence(spec)
    if spec.steps == 1:
        # the sole step gets the whole budget exactly
        return np.array([float(spec.epsilon)], dtype=np.float64)
    # normalize by the sum in canonical (decreasing) order so that the
    # increasing schedule is the exact elementwise reversal of the decreasing one
    total = float(np.sum(raw[::-1])) if spec.direction == "increasing" else float(np.sum(raw))
    if total == 0.0:
        raise ValueError("cannot normalize an all-zero step sequence")
    return (spec.epsilon * raw) / total
