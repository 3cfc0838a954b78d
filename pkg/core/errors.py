"""
Exception hierarchy shared by every package.
"""
from typing import Optional


class CoopMpcError(Exception):
    """Base class for all engine errors."""


class DimensionMismatchError(CoopMpcError, ValueError):
    """Shapes or periods of two objects do not agree."""


class ConfigurationError(CoopMpcError):
    """
    Invalid scenario or run configuration.

    Args:
        message: Human readable description
        field: Dotted path of the offending config field, if known
    """

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class InfeasibleProblemError(CoopMpcError):
    """The optimal control problem has no feasible point the solver could find."""

    def __init__(self, message: str, step: Optional[int] = None, group: Optional[str] = None):
        self.step = step
        self.group = group
        details = []
        if step is not None:
            details.append(f"step {step}")
        if group:
            details.append(f"group '{group}'")
        suffix = f" ({', '.join(details)})" if details else ""
        super().__init__(f"{message}{suffix}")


class SynthesisError(CoopMpcError):
    """Terminal ingredient synthesis failed."""


class ProjectionError(CoopMpcError):
    """Projection onto the admissible cooperation set failed."""


class TerminalSetExitError(CoopMpcError):
    """The terminal controller left the terminal set while building a candidate."""


class EventError(CoopMpcError):
    """A scenario event cannot be applied."""
