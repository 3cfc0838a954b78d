"""
Closed-loop diagnostics: Lyapunov values and their window decrease,
recursive feasibility, cooperation gap and settling, and the accumulated
tracking cost against a fixed periodic reference.
"""
import logging
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from core.errors import ConfigurationError
from core.graph import Graph
from core.trajectory import PeriodicTrajectory, periodic_distance, shift_periodic
from models.base import constraint_residuals
from ocp.costs import min_stage_cost
from simulation.trace import ClosedLoopTrace

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Reference:
    """Periodic state and input reference of one agent, indexed from time 0."""

    states: PeriodicTrajectory
    inputs: PeriodicTrajectory


def align_reference(traj: PeriodicTrajectory, start: int) -> PeriodicTrajectory:
    """
    Re-index a trajectory chosen at time ``start`` to absolute time.

    The result r satisfies r(k) = traj(k - start) for every k >= 0, drift
    included.
    """
    period = traj.period
    shift = (-start) % period
    laps = (start + shift) // period
    samples = np.array([traj.at(tau + shift) - laps * traj.drift for tau in range(period)])
    return PeriodicTrajectory(samples, traj.drift)


# ----- Lyapunov -----

def lyapunov_value(trace: ClosedLoopTrace, t: int) -> Optional[float]:
    """V(xi(t)) = J(xi(t)) - lambda(N) W0; None, with a warning, when W0 is unknown."""
    step = trace.steps[t]
    if step.w0 is None:
        logger.warning(f"t={t}: W0 unavailable, Lyapunov value skipped")
        return None
    return step.lyapunov


def _window_start(trace: ClosedLoopTrace, t: int) -> int:
    return t - trace.steps[t].period + 1


def lyapunov_window(trace: ClosedLoopTrace, t: int) -> Optional[float]:
    """
    Sum of V over the T steps ending at t.

    None when the window leaves the current phase or W0 is unknown.
    """
    start = _window_start(trace, t)
    if start < 0:
        return None
    phase = trace.steps[t].phase
    window = trace.steps[start:t + 1]
    if any(s.phase != phase for s in window) or any(s.w0 is None for s in window):
        return None
    return float(sum(s.lyapunov for s in window))


def lyapunov_window_decrease(trace: ClosedLoopTrace, t: int) -> Optional[float]:
    """
    V_T(xi_T(t+1)) - V_T(xi_T(t)).

    Raises:
        ValueError: t < T - 1 or t + 1 beyond the trace
    """
    period = trace.steps[t].period
    if t < period - 1:
        raise ValueError(f"window decrease needs t >= T - 1 = {period - 1}, got {t}")
    if t + 1 >= len(trace.steps):
        raise ValueError(f"window decrease at t={t} needs step {t + 1}, trace has {len(trace.steps)} steps")
    if trace.steps[t].phase != trace.steps[t + 1].phase:
        return None
    now = lyapunov_window(trace, t)
    later = lyapunov_window(trace, t + 1)
    if now is None or later is None:
        return None
    return later - now


@dataclass
class WindowMargin:
    t: int
    margin: float
    window: float
    ok: bool


def lyapunov_margins(trace: ClosedLoopTrace, tolerance: float = 1e-5) -> List[WindowMargin]:
    """Window decrease at every admissible t; ``ok`` uses tolerance * (1 + |V_T|)."""
    margins = []
    for t in range(len(trace.steps) - 1):
        if t < trace.steps[t].period - 1:
            continue
        margin = lyapunov_window_decrease(trace, t)
        if margin is None:
            continue
        window = lyapunov_window(trace, t)
        margins.append(WindowMargin(t=t, margin=margin, window=window, ok=margin <= tolerance * (1.0 + abs(window))))
    return margins


# ----- performance -----

def converged_references(trace: ClosedLoopTrace) -> Dict[int, Reference]:
    """Optimal references of the last step, re-indexed to absolute time, by agent id."""
    if not trace.steps:
        raise ValueError("trace has no steps")
    last = trace.steps[-1]
    return {
        agent_id: Reference(align_reference(xs, last.t), align_reference(us, last.t))
        for agent_id, xs, us in zip(last.agent_ids, last.ref_states, last.ref_inputs)
    }


def converged_outputs(trace: ClosedLoopTrace) -> Dict[int, PeriodicTrajectory]:
    last = trace.steps[-1]
    return {agent_id: align_reference(y, last.t) for agent_id, y in zip(last.agent_ids, last.coop_outputs)}


def performance_J_K(
    trace: ClosedLoopTrace,
    r_prime: Union[Mapping[int, Reference], Sequence[Reference]],
    K: int,
) -> float:
    """
    Accumulated closed-loop stage cost over the first K steps against r'.

    Raises:
        ConfigurationError: K exceeds the number of recorded steps
    """
    if K < 0 or K > len(trace.steps):
        raise ConfigurationError(f"K={K} outside the run length {len(trace.steps)}", "k")
    refs = dict(enumerate(r_prime)) if not isinstance(r_prime, Mapping) else dict(r_prime)
    total = 0.0
    for step in trace.steps[:K]:
        for agent_id, x, u in zip(step.agent_ids, step.x, step.u):
            ref = refs[agent_id]
            cost = trace.agents[agent_id].stage_cost
            total += cost(x, u, ref.states.at(step.t), ref.inputs.at(step.t))
    return float(total)


def tracking_floor(trace: ClosedLoopTrace, t: int) -> float:
    """Sum over agents of the input-minimised stage cost at x(t) against the optimal reference r_T(0|t)."""
    step = trace.steps[t]
    total = 0.0
    for agent_id, x, xs, us in zip(step.agent_ids, step.x, step.ref_states, step.ref_inputs):
        info = trace.agents[agent_id]
        total += min_stage_cost(info.stage_cost, x, xs.at(0), us.at(0), info.model.input_box)
    return float(total)


# ----- feasibility -----

@dataclass
class FeasibilityRow:
    t: int
    candidate: Optional[float]
    path: float
    coupling: float


@dataclass
class FeasibilityReport:
    rows: List[FeasibilityRow]
    tolerance: float
    min_distance: Optional[float] = None

    @property
    def max_candidate(self) -> float:
        return max((r.candidate for r in self.rows if r.candidate is not None), default=0.0)

    @property
    def max_path(self) -> float:
        return max((r.path for r in self.rows), default=0.0)

    @property
    def max_coupling(self) -> float:
        return max((r.coupling for r in self.rows), default=0.0)

    @property
    def violations(self) -> List[int]:
        worst = lambda r: max(r.path, r.coupling, r.candidate or 0.0)
        return [r.t for r in self.rows if worst(r) > self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.violations


def min_pairwise_distance(trace: ClosedLoopTrace) -> Optional[float]:
    """Smallest distance between any two agents over the run, on the coupling's components."""
    if trace.coupling is None:
        return None
    selector = list(trace.coupling.selector)
    best = np.inf
    for states in trace.states:
        for a, b in combinations(states, 2):
            best = min(best, float(np.linalg.norm(a[selector] - b[selector])))
    return None if not np.isfinite(best) else best


def recursive_feasibility_audit(trace: ClosedLoopTrace, tolerance: float = 1e-6) -> FeasibilityReport:
    """
    Per step: violation of the shifted candidate, of the state and input
    constraints at (x(t), u(t)), and of the coupling at the realized states.
    """
    rows = []
    for step in trace.steps:
        models = [trace.agents[i].model for i in step.agent_ids]
        graph = Graph(len(step.agent_ids), step.edges)
        reports = constraint_residuals(models, trace.coupling, step.x, step.u, graph)
        path = max((float(np.max(r.path, initial=0.0)) for r in reports), default=0.0)
        coupling = max((float(np.max(r.coupling, initial=0.0)) for r in reports), default=0.0)
        rows.append(FeasibilityRow(t=step.t, candidate=step.candidate_violation, path=max(path, 0.0),
                                   coupling=max(coupling, 0.0)))
    report = FeasibilityReport(rows=rows, tolerance=tolerance, min_distance=min_pairwise_distance(trace))
    if report.violations:
        logger.warning(f"feasibility audit of '{trace.scenario}': violations at t={report.violations[:10]}")
    return report


# ----- cooperation -----

def cooperation_gaps(trace: ClosedLoopTrace) -> List[Optional[float]]:
    """W(y_T^0(.|xi(t))) - W0 per step."""
    return [None if s.w0 is None else s.cooperation - s.w0 for s in trace.steps]


def settling(trace: ClosedLoopTrace) -> List[Optional[float]]:
    """
    Distance between the shifted optimal output of step t and the optimal
    output of step t + 1, summed over agents; None across events.
    """
    values = []
    for now, later in zip(trace.steps, trace.steps[1:]):
        if now.phase != later.phase:
            values.append(None)
            continue
        following = dict(zip(later.agent_ids, later.coop_outputs))
        values.append(float(sum(
            periodic_distance(shift_periodic(y, 1), following[agent_id])
            for agent_id, y in zip(now.agent_ids, now.coop_outputs)
        )))
    return values


@dataclass
class DiagnosticsReport:
    """Summary of every diagnostic over one trace."""

    steps: int
    w0: Optional[float]
    w0_approximate: bool
    lyapunov: List[Optional[float]] = field(repr=False)
    window_margins: List[float] = field(repr=False)
    lyapunov_violations: int
    worst_window_margin: Optional[float]
    max_violation: float
    feasibility_passed: bool
    min_distance: Optional[float]
    initial_gap: Optional[float]
    final_gap: Optional[float]
    final_settling: Optional[float]
    performance: Dict[int, float] = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        values = [v for v in self.lyapunov if v is not None] + list(self.window_margins)
        return bool(np.all(np.isfinite(values))) if values else True

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data.pop("lyapunov")
        data.pop("window_margins")
        return data


def diagnose(
    trace: ClosedLoopTrace,
    lyapunov_tolerance: float = 1e-5,
    feasibility_tolerance: float = 1e-6,
    horizons_K: Sequence[int] = (),
) -> DiagnosticsReport:
    """
    Run every diagnostic on a trace.

    Args:
        trace: Closed-loop trace
        lyapunov_tolerance: Relative tolerance of the window decrease
        feasibility_tolerance: Largest admissible residual
        horizons_K: Values of K for which the accumulated cost against the
            converged reference is reported
    """
    margins = lyapunov_margins(trace, lyapunov_tolerance)
    feasibility = recursive_feasibility_audit(trace, feasibility_tolerance)
    gaps = [g for g in cooperation_gaps(trace) if g is not None]
    settled = [s for s in settling(trace) if s is not None]
    performance = {}
    if trace.steps and horizons_K:
        refs = converged_references(trace)
        for K in horizons_K:
            if K <= len(trace.steps) and all(i in refs for s in trace.steps[:K] for i in s.agent_ids):
                performance[int(K)] = performance_J_K(trace, refs, K)
    last_w0 = trace.steps[-1].w0 if trace.steps else None
    return DiagnosticsReport(
        steps=len(trace.steps),
        w0=last_w0,
        w0_approximate=trace.w0_approximate,
        lyapunov=trace.lyapunov_values(),
        window_margins=[m.margin for m in margins],
        lyapunov_violations=sum(1 for m in margins if not m.ok),
        worst_window_margin=max((m.margin for m in margins), default=None),
        max_violation=max((s.max_residual for s in trace.steps), default=0.0),
        feasibility_passed=feasibility.passed,
        min_distance=feasibility.min_distance,
        initial_gap=gaps[0] if gaps else None,
        final_gap=gaps[-1] if gaps else None,
        final_settling=settled[-1] if settled else None,
        performance=performance,
    )
