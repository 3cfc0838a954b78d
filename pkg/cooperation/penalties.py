"""
Change penalty on the cooperation output and the horizon scaling lambda(N).
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from core.errors import ConfigurationError, DimensionMismatchError
from core.trajectory import PeriodicTrajectory


@dataclass(frozen=True)
class ChangePenalty:
    """V_i(y, y_pr) = delta_i * sum_tau ||y(tau) - y_pr(tau)||^2."""

    weights: Sequence[float]

    def __post_init__(self):
        weights = tuple(float(w) for w in self.weights)
        if any(w <= 0 for w in weights):
            raise ConfigurationError("change penalty weights must be positive", "change_penalty.weights")
        object.__setattr__(self, "weights", weights)

    @property
    def c_delta(self) -> float:
        """Growth constant of the quadratic penalty, 2 * max delta_i."""
        return 2.0 * max(self.weights) if self.weights else 0.0

    def term(self, i: int, y: PeriodicTrajectory, y_pr: PeriodicTrajectory) -> float:
        if y.period != y_pr.period or y.dim != y_pr.dim:
            raise DimensionMismatchError(
                f"agent {i}: output of shape {y.samples.shape} against previous {y_pr.samples.shape}"
            )
        return self.weights[i] * float(np.sum((y.samples - y_pr.samples) ** 2))


def eval_change_penalty(
    penalty: ChangePenalty,
    y_T: Sequence[PeriodicTrajectory],
    y_pr: Sequence[PeriodicTrajectory],
) -> float:
    """Sum of V_i over all agents."""
    if not (len(y_T) == len(y_pr) == len(penalty.weights)):
        raise DimensionMismatchError("change penalty, outputs and previous outputs disagree on the agent count")
    return float(sum(penalty.term(i, y, yp) for i, (y, yp) in enumerate(zip(y_T, y_pr))))


@dataclass(frozen=True)
class Scaling:
    """Affine weight lambda(N) = slope * N + offset on the cooperation terms."""

    slope: float = 1.0
    offset: float = 1.0

    def __post_init__(self):
        if self.slope < 1.0 or self.offset < 1.0:
            raise ConfigurationError("lambda(N) must satisfy lambda(N) >= N and lambda(0) >= 1", "scaling")

    def __call__(self, horizon: int) -> float:
        if horizon < 0:
            raise ValueError(f"horizon must be non-negative, got {horizon}")
        return self.slope * horizon + self.offset
