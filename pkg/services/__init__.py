"""
Services package initialization.
"""
from services.plot_service import plot_service, PlotService
from services.run_service import run_service, RunService, RunConfig, CheckResult

__all__ = [
    "plot_service",
    "PlotService",
    "run_service",
    "RunService",
    "RunConfig",
    "CheckResult"
]
