"""
Horizon sweep of the closed-loop performance against the converged
periodic reference, with the plain tracking MPC value as a baseline.
"""
import csv
import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize

from core.errors import ConfigurationError, CoopMpcError, InfeasibleProblemError
from core.trajectory import periodic_distance
from scenarios.builder import Scenario
from simulation.closed_loop import closed_loop_run
from simulation.diagnostics import Reference, converged_references, performance_J_K

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ("N", "J_K", "baseline", "reference_change", "steps", "error")


@dataclass
class SweepRow:
    horizon: int
    performance: Optional[float] = None
    baseline: Optional[float] = None
    reference_change: Optional[float] = None
    steps: int = 0
    error: Optional[str] = None
    references: Optional[Dict[int, Reference]] = dataclasses.field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_row(self) -> Dict[str, object]:
        return {
            "N": self.horizon,
            "J_K": "" if self.performance is None else self.performance,
            "baseline": "" if self.baseline is None else self.baseline,
            "reference_change": "" if self.reference_change is None else self.reference_change,
            "steps": self.steps,
            "error": self.error or "",
        }


def reference_distance(a: Dict[int, Reference], b: Dict[int, Reference]) -> float:
    """Largest periodic distance between two reference stacks, states and inputs."""
    if set(a) != set(b):
        raise ConfigurationError("reference stacks cover different agents", "references")
    return max(
        max(periodic_distance(a[i].states, b[i].states), periodic_distance(a[i].inputs, b[i].inputs)) for i in a
    )


def tracking_baseline_value(
    scenario: Scenario,
    x: Sequence[np.ndarray],
    r_prime: Dict[int, Reference],
    N: int,
    max_iterations: int = 500,
) -> float:
    """
    Optimal value of the plain tracking problem towards a fixed reference.

    Minimises the summed stage and terminal costs of all agents over N steps
    with the references pinned to r' (indexed by absolute time from 0),
    subject to the state, input, path and coupling constraints and the
    terminal constraint. No cooperation or change terms.

    Raises:
        InfeasibleProblemError: no feasible point was found
    """
    agents = scenario.agents
    ids = scenario.agent_ids
    refs = [r_prime[i] for i in ids]
    q_dims = [spec.model.q for spec in agents]
    offsets = np.concatenate([[0], np.cumsum([N * q for q in q_dims])]).astype(int)

    def unpack(flat):
        return [flat[offsets[i]:offsets[i + 1]].reshape(N, q_dims[i]) for i in range(len(agents))]

    def rollout(flat):
        trajectories = []
        for spec, x0, u in zip(agents, x, unpack(flat)):
            states = [np.asarray(x0, dtype=float)]
            for k in range(N):
                states.append(spec.model.step(states[-1], u[k]))
            trajectories.append(np.array(states))
        return trajectories

    def cost(flat):
        total = 0.0
        for spec, ref, u, states in zip(agents, refs, unpack(flat), rollout(flat)):
            for k in range(N):
                total += spec.stage_cost(states[k], u[k], ref.states.at(k), ref.inputs.at(k))
            total += spec.terminal.cost(states[N], ref.states.at(N))
        return total

    def inequalities(flat):
        rows = []
        trajectories = rollout(flat)
        for spec, ref, u, states in zip(agents, refs, unpack(flat), trajectories):
            for k in range(N):
                rows.append(-spec.model.path_residual(states[k], u[k]))
            if not spec.terminal.is_equality:
                rows.append(np.array([spec.terminal.alpha - spec.terminal.level(states[N], ref.states.at(N))]))
        if scenario.coupling is not None:
            for k in range(1, N + 1):
                for i, j in scenario.graph.edges:
                    a = scenario.coupling.select(trajectories[i][k])
                    b = scenario.coupling.select(trajectories[j][k])
                    rows.append(-scenario.coupling.pair_residual(a, b))
        return np.concatenate(rows) if rows else np.zeros(0)

    def equalities(flat):
        rows = [
            states[N] - ref.states.at(N)
            for spec, ref, states in zip(agents, refs, rollout(flat))
            if spec.terminal.is_equality
        ]
        return np.concatenate(rows) if rows else np.zeros(0)

    if N == 0:
        return 0.0
    start = np.concatenate([
        np.concatenate([spec.model.input_box.clip(ref.inputs.at(k)) for k in range(N)])
        for spec, ref in zip(agents, refs)
    ])
    bounds = []
    for spec in agents:
        box = spec.model.input_box
        pairs = [(lo if np.isfinite(lo) else None, hi if np.isfinite(hi) else None) for lo, hi in zip(box.lower, box.upper)]
        bounds.extend(pairs * N)
    constraints = [{"type": "ineq", "fun": inequalities}]
    if any(spec.terminal.is_equality for spec in agents):
        constraints.append({"type": "eq", "fun": equalities})

    result = minimize(cost, start, method="SLSQP", bounds=bounds, constraints=constraints,
                      options={"maxiter": max_iterations, "ftol": 1e-10})
    violation = max(
        float(np.max(-inequalities(result.x), initial=0.0)),
        float(np.max(np.abs(equalities(result.x)), initial=0.0)),
    )
    if violation > 1e-5:
        raise InfeasibleProblemError(
            f"tracking baseline with N={N} infeasible (violation {violation:.2e}): {result.message}",
            group="terminal",
        )
    logger.debug(f"tracking baseline N={N}: value {result.fun:.6g} after {result.nit} iterations")
    return float(result.fun)


def horizon_sweep(
    scenario: Scenario,
    horizons: Sequence[int],
    K: int,
    x0: Optional[Sequence[np.ndarray]] = None,
    steps: Optional[int] = None,
    baseline: bool = True,
) -> List[SweepRow]:
    """
    Closed-loop performance for several prediction horizons.

    Each row runs the closed loop with horizon N, takes the optimal
    references of the last step as r', reports the accumulated stage cost of
    the first K steps against r' and, optionally, the tracking baseline at
    x0. Scheduled events are not applied. A failing row records its error
    and the sweep continues.

    Raises:
        ConfigurationError: no horizons given or K longer than the run
    """
    if not horizons:
        raise ConfigurationError("the sweep needs at least one horizon", "horizons")
    steps = scenario.config.steps if steps is None else int(steps)
    if K < 1 or K > steps:
        raise ConfigurationError(f"K={K} must lie in 1..{steps}, the run length", "k")
    if scenario.events:
        logger.warning(f"sweep of '{scenario.name}' ignores {len(scenario.events)} scheduled events")
    base = dataclasses.replace(scenario, events=[])
    x0 = base.x0 if x0 is None else x0

    rows: List[SweepRow] = []
    previous: Optional[Dict[int, Reference]] = None
    for N in horizons:
        row = SweepRow(horizon=int(N))
        try:
            run_scenario = base.with_horizon(int(N))
            trace = closed_loop_run(run_scenario, x0=x0, steps=steps, log_every=0)
            row.steps = len(trace.steps)
            refs = converged_references(trace)
            row.references = refs
            row.performance = performance_J_K(trace, refs, K)
            if previous is not None:
                row.reference_change = reference_distance(previous, refs)
            previous = refs
            if baseline:
                row.baseline = tracking_baseline_value(run_scenario, x0, refs, int(N))
        except CoopMpcError as exc:
            row.error = str(exc)
            logger.error(f"sweep row N={N} failed: {exc}")
        rows.append(row)
        logger.info(f"sweep N={N}: J_K={row.performance}, baseline={row.baseline}")
    return rows


def sweep_is_monotone(rows: Sequence[SweepRow], tolerance: float = 0.05) -> bool:
    """J_K non-increasing in N up to a relative tolerance, over the successful rows."""
    values = [r.performance for r in sorted(rows, key=lambda r: r.horizon) if r.ok and r.performance is not None]
    return all(later <= earlier * (1.0 + tolerance) + 1e-9 for earlier, later in zip(values, values[1:]))


def write_sweep_csv(rows: Sequence[SweepRow], path: Union[str, Path]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(SWEEP_COLUMNS))
        writer.writeheader()
        writer.writerows(r.to_row() for r in rows)
    logger.info(f"sweep table of {len(rows)} rows written to {path}")
