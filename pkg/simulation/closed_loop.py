"""
Receding-horizon closed loop: solve, apply the first input of every agent,
re-simulate the plant and carry the shifted cooperation outputs forward.
"""
import logging
from typing import Callable, Optional, Sequence

import numpy as np

from cooperation.candidates import estimate_W0
from core.errors import InfeasibleProblemError, TerminalSetExitError
from core.trajectory import shift_periodic
from ocp.candidate import candidate_blocks
from ocp.problem import OcpProblem, build_ocp
from scenarios.builder import Scenario
from simulation.events import ScenarioState, apply_event, describe
from simulation.trace import AgentInfo, ClosedLoopTrace, EventRecord, StepRecord
from solver.guard import suboptimality_guard
from solver.solution import OcpSolution
from solver.sqp import solve

logger = logging.getLogger(__name__)

SOFT_PENALTY = 1e6


def resolve_w0(scenario: Scenario, problem: OcpProblem):
    """
    Known minimum of W for the current phase, estimated when unknown.

    With coupling on the references the estimate ignores the coupling and
    is reported as an approximate lower bound.
    """
    if scenario.w0 is not None:
        return scenario.w0, False
    estimate = estimate_W0(problem.objective, problem.coop_sets, relaxed=problem.reference_coupling)
    if estimate.lower_bound:
        logger.warning(f"W0 of '{problem.objective.name}' is a lower bound without coupling: {estimate.value:.6g}")
    elif estimate.approximate:
        logger.warning(f"W0 of '{problem.objective.name}' is an estimate: {estimate.value:.6g}")
    return estimate.value, estimate.approximate


def _solve_step(state: ScenarioState, problem: OcpProblem, soften: bool):
    scenario = state.scenario
    tolerance = scenario.sqp.feasibility_tolerance
    candidate = None
    if state.previous is not None:
        try:
            candidate = candidate_blocks(state.previous, problem)
        except TerminalSetExitError as exc:
            logger.warning(f"t={state.t}: no shifted candidate, {exc}")
    solution = solve(problem, candidate, scenario.sqp, scenario.admm)
    solution = suboptimality_guard(candidate, solution, problem, tolerance)
    if solution.feasible:
        return solution, candidate
    if state.t == 0 or not soften:
        raise InfeasibleProblemError(
            f"problem at t={state.t} is infeasible: group '{solution.failing_group}' "
            f"violated by {solution.max_violation:.3e}",
            step=state.t,
            group=solution.failing_group,
        )
    logger.warning(f"t={state.t}: infeasible problem, resolving with softened constraints")
    soft = scenario.sqp.model_copy(update={"soft_penalty": SOFT_PENALTY})
    return solve(problem, candidate, soft, scenario.admm), candidate


def _record(state: ScenarioState, problem: OcpProblem, solution: OcpSolution, candidate, inputs, w0) -> StepRecord:
    scenario = state.scenario
    outputs = [spec.model.output(x, u) for spec, x, u in zip(scenario.agents, state.x, inputs)]
    candidate_violation = candidate_objective = None
    if candidate is not None:
        candidate_violation = problem.max_violation(candidate)
        candidate_objective = problem.objective_value(candidate)
    return StepRecord(
        t=state.t,
        agent_ids=list(scenario.agent_ids),
        edges=scenario.graph.edges,
        phase=state.phase,
        horizon=problem.horizon,
        period=problem.period,
        x=[np.array(x) for x in state.x],
        u=[np.array(u) for u in inputs],
        y=outputs,
        coop_outputs=list(solution.outputs),
        aux=list(solution.aux),
        ref_states=list(solution.ref_states),
        ref_inputs=list(solution.ref_inputs),
        objective=solution.objective,
        scaling=problem.scaling,
        cooperation=float(sum(c.cooperation for c in solution.costs)),
        change=float(sum(c.change for c in solution.costs)),
        w0=w0,
        max_residual=solution.max_violation,
        status=solution.status,
        iterations=solution.iterations,
        qp_iterations=solution.qp_iterations,
        rounds=solution.rounds,
        message_bytes=solution.messages.total_bytes,
        source=solution.source,
        fresh=problem.y_pr is None,
        candidate_violation=candidate_violation,
        candidate_objective=candidate_objective,
    )


def closed_loop_run(
    scenario: Scenario,
    x0: Optional[Sequence[np.ndarray]] = None,
    steps: Optional[int] = None,
    soften: Optional[bool] = None,
    log_every: int = 25,
    on_step: Optional[Callable[[StepRecord], None]] = None,
) -> ClosedLoopTrace:
    """
    Run the distributed controller in closed loop.

    Args:
        scenario: Scenario at its initial phase
        x0: Initial states, the scenario's when omitted
        steps: Number of steps, the scenario's default when omitted
        soften: Resolve mid-run infeasible problems with softened constraints;
            the scenario's setting when omitted
        log_every: Stride of the per-step INFO log
        on_step: Called with every step record

    Returns:
        Trace with steps + 1 states

    Raises:
        InfeasibleProblemError: The problem at t = 0 is infeasible, or a later
            one is and softening is off
    """
    steps = scenario.config.steps if steps is None else int(steps)
    if steps < 0:
        raise ValueError(f"steps must be non-negative, got {steps}")
    soften = scenario.config.soften_on_infeasibility if soften is None else soften
    x = [np.asarray(xi, dtype=float).copy() for xi in (scenario.x0 if x0 is None else x0)]
    state = ScenarioState(scenario=scenario, x=x)
    trace = ClosedLoopTrace(
        scenario=scenario.name,
        agents={i: AgentInfo(spec.model, spec.stage_cost) for i, spec in zip(scenario.agent_ids, scenario.agents)},
        coupling=scenario.coupling,
    )
    trace.record_state(scenario.agent_ids, x)
    events = sorted(scenario.events, key=lambda e: e.time)
    logger.info(f"closed loop '{scenario.name}': {steps} steps, {scenario.m} agents, {len(events)} events")

    w0, w0_phase = None, -1
    for t in range(steps):
        state.t = t
        while events and events[0].time <= t:
            event = events.pop(0)
            state = apply_event(state, event)
            trace.events.append(EventRecord(t=t, kind=event.kind, detail=describe(event)))
        problem = build_ocp(state.scenario, state.x, state.y_pr, t)
        if w0_phase != state.phase:
            declared = ("path", "terminal", "reference", "admissible") if problem.horizon else ("reference", "admissible")
            problem.completeness_audit(declared)
            w0, approximate = resolve_w0(state.scenario, problem)
            trace.w0_approximate = trace.w0_approximate or approximate
            w0_phase = state.phase

        solution, candidate = _solve_step(state, problem, soften)
        inputs = solution.first_inputs()
        record = _record(state, problem, solution, candidate, inputs, w0)
        trace.steps.append(record)
        trace.messages = solution.messages
        if on_step is not None:
            on_step(record)

        models = [spec.model for spec in state.scenario.agents]
        state.x = [model.step(xi, ui) for model, xi, ui in zip(models, state.x, inputs)]
        state.y_pr = [shift_periodic(traj, 1) for traj in solution.outputs]
        state.previous = solution
        trace.record_state(state.scenario.agent_ids, state.x)

        if log_every and (t % log_every == 0 or t == steps - 1):
            logger.info(
                f"t={t}: status {solution.status} ({solution.source}), J={solution.objective:.6g}, "
                f"W={record.cooperation:.6g}, iterations {solution.iterations}, residual {solution.max_violation:.2e}"
            )
    return trace
