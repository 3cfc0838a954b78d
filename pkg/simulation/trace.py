"""
Closed-loop trace: per-step states, inputs, solver outcome and the
cooperation outputs chosen by the optimizer.
"""
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.trajectory import PeriodicTrajectory
from models.base import AgentModel, CouplingConstraint
from ocp.costs import StageCost
from solver.messages import MessageLog

logger = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1
TRAILING_COLUMNS = ("J", "V", "max_residual", "solver_status", "solver_iters")


@dataclass
class StepRecord:
    """
    One closed-loop step t.

    Lists are indexed by the agent's position at time t; ``agent_ids`` maps
    positions to original agent ids.
    """

    t: int
    agent_ids: List[int]
    edges: Tuple[Tuple[int, int], ...]
    phase: int
    horizon: int
    period: int
    x: List[np.ndarray]
    u: List[np.ndarray]
    y: List[np.ndarray]
    coop_outputs: List[PeriodicTrajectory]
    aux: List[np.ndarray]
    ref_states: List[PeriodicTrajectory]
    ref_inputs: List[PeriodicTrajectory]
    objective: float
    scaling: float
    cooperation: float
    change: float
    w0: Optional[float]
    max_residual: float
    status: str
    iterations: int
    qp_iterations: int
    rounds: int
    message_bytes: int
    source: str
    fresh: bool
    candidate_violation: Optional[float] = None
    candidate_objective: Optional[float] = None

    @property
    def lyapunov(self) -> Optional[float]:
        """V(xi(t)) = J - lambda(N) W0, None when W0 is unknown."""
        if self.w0 is None:
            return None
        return self.objective - self.scaling * self.w0


@dataclass
class EventRecord:
    t: int
    kind: str
    detail: str


@dataclass
class AgentInfo:
    """Static data of one agent, keyed by original id in the trace."""

    model: AgentModel
    stage_cost: StageCost


@dataclass
class ClosedLoopTrace:
    """
    Result of a closed-loop run.

    ``states`` has one entry per time 0..steps; entry t lists the states of
    the agents present at t (``state_ids[t]`` holds their original ids).
    """

    scenario: str
    agents: Dict[int, AgentInfo]
    coupling: Optional[CouplingConstraint]
    states: List[List[np.ndarray]] = field(default_factory=list)
    state_ids: List[List[int]] = field(default_factory=list)
    steps: List[StepRecord] = field(default_factory=list)
    events: List[EventRecord] = field(default_factory=list)
    w0_approximate: bool = False
    messages: Optional[MessageLog] = None

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def agent_ids(self) -> List[int]:
        return sorted(self.agents)

    def record_state(self, ids: Sequence[int], x: Sequence[np.ndarray]):
        self.state_ids.append(list(ids))
        self.states.append([np.array(xi, dtype=float) for xi in x])

    def state_of(self, t: int, agent_id: int) -> Optional[np.ndarray]:
        ids = self.state_ids[t]
        return self.states[t][ids.index(agent_id)] if agent_id in ids else None

    def positions(self, t: int) -> Dict[int, int]:
        return {agent_id: pos for pos, agent_id in enumerate(self.state_ids[t])}

    def lyapunov_values(self) -> List[Optional[float]]:
        return [s.lyapunov for s in self.steps]

    # ----- CSV -----

    def _angle_columns(self) -> Tuple[set, set]:
        states, outputs = set(), set()
        for agent_id, info in self.agents.items():
            model = info.model
            for k in model.angle_states:
                states.add((agent_id, k))
            c, _ = model.output_jacobians(np.zeros(model.n), np.zeros(model.q))
            for row in range(model.p):
                hits = np.flatnonzero(c[row])
                if hits.size == 1 and int(hits[0]) in model.angle_states:
                    outputs.add((agent_id, row))
        return states, outputs

    def columns(self) -> List[str]:
        names = ["t"]
        for prefix, attr in (("x", "n"), ("u", "q"), ("y", "p")):
            for agent_id in self.agent_ids:
                dim = getattr(self.agents[agent_id].model, attr)
                names.extend(f"{prefix}{agent_id}_{k}" for k in range(dim))
        names.extend(TRAILING_COLUMNS)
        return names

    def rows(self) -> List[Dict[str, object]]:
        """One row per time 0..steps; angles in degrees."""
        angle_states, angle_outputs = self._angle_columns()
        rows = []
        for t in range(len(self.states)):
            row: Dict[str, object] = {"t": t}
            for pos, agent_id in enumerate(self.state_ids[t]):
                for k, value in enumerate(self.states[t][pos]):
                    row[f"x{agent_id}_{k}"] = math.degrees(value) if (agent_id, k) in angle_states else float(value)
            if t < len(self.steps):
                step = self.steps[t]
                for pos, agent_id in enumerate(step.agent_ids):
                    for k, value in enumerate(step.u[pos]):
                        row[f"u{agent_id}_{k}"] = float(value)
                    for k, value in enumerate(step.y[pos]):
                        row[f"y{agent_id}_{k}"] = math.degrees(value) if (agent_id, k) in angle_outputs else float(value)
                row["J"] = step.objective
                row["V"] = "" if step.lyapunov is None else step.lyapunov
                row["max_residual"] = step.max_residual
                row["solver_status"] = step.status
                row["solver_iters"] = step.iterations
            rows.append(row)
        return rows

    def to_csv(self, path: Union[str, Path]):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=self.columns(), restval="")
            writer.writeheader()
            writer.writerows(self.rows())
        logger.info(f"trace of {len(self.states)} rows written to {path}")

    # ----- summary -----

    def summary(self) -> Dict[str, object]:
        """Headline numbers of the run."""
        statuses: Dict[str, int] = {}
        for step in self.steps:
            statuses[step.status] = statuses.get(step.status, 0) + 1
        last = self.steps[-1] if self.steps else None
        return {
            "scenario": self.scenario,
            "steps": len(self.steps),
            "schema_version": CSV_SCHEMA_VERSION,
            "statuses": statuses,
            "max_residual": max((s.max_residual for s in self.steps), default=0.0),
            "final_objective": None if last is None else last.objective,
            "final_cooperation": None if last is None else last.cooperation,
            "total_rounds": sum(s.rounds for s in self.steps),
            "total_message_bytes": sum(s.message_bytes for s in self.steps),
            "guard_fallbacks": sum(1 for s in self.steps if s.source == "candidate"),
            "events": [{"t": e.t, "kind": e.kind, "detail": e.detail} for e in self.events],
        }


def read_trace_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))
