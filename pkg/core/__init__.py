"""
Core package initialization.
"""
from core.errors import (
    CoopMpcError,
    ConfigurationError,
    DimensionMismatchError,
    EventError,
    InfeasibleProblemError,
    ProjectionError,
    SynthesisError,
    TerminalSetExitError,
)
from core.graph import Graph, neighbor_slice
from core.trajectory import (
    ExtendedState,
    PeriodicTrajectory,
    check_common_period,
    periodic_distance,
    shift_periodic,
)

__all__ = [
    "CoopMpcError",
    "ConfigurationError",
    "DimensionMismatchError",
    "EventError",
    "InfeasibleProblemError",
    "ProjectionError",
    "SynthesisError",
    "TerminalSetExitError",
    "Graph",
    "neighbor_slice",
    "ExtendedState",
    "PeriodicTrajectory",
    "check_common_period",
    "periodic_distance",
    "shift_periodic",
]
