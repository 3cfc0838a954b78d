"""
Simulation package initialization.
"""
from simulation.closed_loop import SOFT_PENALTY, closed_loop_run, resolve_w0
from simulation.diagnostics import (
    DiagnosticsReport,
    FeasibilityReport,
    Reference,
    align_reference,
    converged_outputs,
    converged_references,
    cooperation_gaps,
    diagnose,
    lyapunov_margins,
    lyapunov_value,
    lyapunov_window,
    lyapunov_window_decrease,
    min_pairwise_distance,
    performance_J_K,
    recursive_feasibility_audit,
    settling,
    tracking_floor,
)
from simulation.events import ScenarioState, apply_event
from simulation.sweep import SweepRow, horizon_sweep, sweep_is_monotone, tracking_baseline_value, write_sweep_csv
from simulation.trace import CSV_SCHEMA_VERSION, ClosedLoopTrace, StepRecord, read_trace_csv

__all__ = [
    "SOFT_PENALTY",
    "closed_loop_run",
    "resolve_w0",
    "DiagnosticsReport",
    "FeasibilityReport",
    "Reference",
    "align_reference",
    "converged_outputs",
    "converged_references",
    "cooperation_gaps",
    "diagnose",
    "lyapunov_margins",
    "lyapunov_value",
    "lyapunov_window",
    "lyapunov_window_decrease",
    "min_pairwise_distance",
    "performance_J_K",
    "recursive_feasibility_audit",
    "settling",
    "tracking_floor",
    "ScenarioState",
    "apply_event",
    "SweepRow",
    "horizon_sweep",
    "sweep_is_monotone",
    "tracking_baseline_value",
    "write_sweep_csv",
    "CSV_SCHEMA_VERSION",
    "ClosedLoopTrace",
    "StepRecord",
    "read_trace_csv",
]
