"""
Periodic trajectories with modular time indexing.

A trajectory stores one period of samples. Indexing at any k >= 0 returns
sample k mod T plus (k // T) times an optional per-period drift, which is how
unwrapped angles (one revolution per period) are represented.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from core.errors import DimensionMismatchError


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PeriodicTrajectory:
    """
    Length-T sequence of vectors indexed modulo T.

    Args:
        samples: Array of shape (T, d)
        drift: Offset added once per completed period, shape (d,)
    """

    samples: np.ndarray
    drift: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples.reshape(-1, 1)
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise DimensionMismatchError(f"samples must have shape (T, d) with T >= 1, got {samples.shape}")
        drift = np.zeros(samples.shape[1]) if self.drift is None else np.asarray(self.drift, dtype=float).ravel()
        if drift.shape != (samples.shape[1],):
            raise DimensionMismatchError(f"drift of shape {drift.shape} does not match dimension {samples.shape[1]}")
        object.__setattr__(self, "samples", _frozen(samples))
        object.__setattr__(self, "drift", _frozen(drift))

    @property
    def period(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def __call__(self, k: int) -> np.ndarray:
        return self.at(k)

    def at(self, k: int) -> np.ndarray:
        """Sample at time k >= 0, lifted by the accumulated drift."""
        if k < 0:
            raise ValueError(f"time index must be non-negative, got {k}")
        laps, tau = divmod(int(k), self.period)
        if laps == 0 or not self.drift.any():
            return self.samples[tau].copy()
        return self.samples[tau] + laps * self.drift

    def lifted(self, length: int) -> np.ndarray:
        """Stack of samples at times 0..length-1, shape (length, d)."""
        return np.array([self.at(k) for k in range(length)]).reshape(length, self.dim)

    def flat(self) -> np.ndarray:
        return self.samples.ravel().copy()

    def with_samples(self, samples: np.ndarray) -> "PeriodicTrajectory":
        return PeriodicTrajectory(np.asarray(samples).reshape(self.period, self.dim), self.drift)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PeriodicTrajectory):
            return NotImplemented
        return (
            self.samples.shape == other.samples.shape
            and np.array_equal(self.samples, other.samples)
            and np.array_equal(self.drift, other.drift)
        )


def shift_periodic(traj: PeriodicTrajectory, k: int) -> PeriodicTrajectory:
    """
    Shift a periodic trajectory forward in time.

    Args:
        traj: Trajectory to shift
        k: Non-negative shift

    Returns:
        Trajectory with result(tau) = traj(tau + k), same period and drift
    """
    if k < 0:
        raise ValueError(f"shift must be non-negative, got {k}")
    if k % traj.period == 0 and not traj.drift.any():
        return PeriodicTrajectory(traj.samples, traj.drift)
    samples = np.array([traj.at(tau + k) for tau in range(traj.period)])
    return PeriodicTrajectory(samples, traj.drift)


def periodic_distance(a: PeriodicTrajectory, b: PeriodicTrajectory) -> float:
    """
    Sum over one period of the Euclidean distance between samples, plus the
    distance between the drifts.

    Equal samples with different drift are at positive distance.
    """
    _check_compatible(a, b)
    samples = float(np.linalg.norm(a.samples - b.samples, axis=1).sum())
    return samples + float(np.linalg.norm(a.drift - b.drift))


def _check_compatible(a: PeriodicTrajectory, b: PeriodicTrajectory):
    if a.period != b.period:
        raise DimensionMismatchError(f"period mismatch: {a.period} vs {b.period}")
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dimension mismatch: {a.dim} vs {b.dim}")


def check_common_period(trajectories: Sequence[PeriodicTrajectory], period: Optional[int] = None) -> int:
    """Verify that all trajectories share one period and return it."""
    if not trajectories:
        if period is None:
            raise DimensionMismatchError("no trajectories given")
        return period
    expected = trajectories[0].period if period is None else period
    for i, traj in enumerate(trajectories):
        if traj.period != expected:
            raise DimensionMismatchError(f"agent {i} has period {traj.period}, expected {expected}")
    return expected


@dataclass(frozen=True)
class ExtendedState:
    """
    Closed-loop state: agent states plus the previous cooperation outputs.

    ``y_pr`` is None before the first solve and after a topology change, in
    which case the change penalty is left out of the next problem.
    """

    x: List[np.ndarray]
    y_pr: Optional[List[PeriodicTrajectory]] = None

    def __post_init__(self):
        object.__setattr__(self, "x", [_frozen(np.ravel(xi)) for xi in self.x])
        if self.y_pr is not None:
            if len(self.y_pr) != len(self.x):
                raise DimensionMismatchError(
                    f"{len(self.y_pr)} previous outputs for {len(self.x)} agents"
                )
            check_common_period(self.y_pr)
            object.__setattr__(self, "y_pr", list(self.y_pr))

    @property
    def m(self) -> int:
        return len(self.x)

    @property
    def period(self) -> Optional[int]:
        return None if not self.y_pr else self.y_pr[0].period

    def stacked_x(self) -> np.ndarray:
        return np.concatenate(self.x) if self.x else np.zeros(0)
