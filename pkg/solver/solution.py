"""
Solution of one optimal control problem.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from core.trajectory import PeriodicTrajectory
from ocp.problem import AgentCost, OcpProblem
from solver.messages import MessageLog

STATUSES = ("optimal", "suboptimal-feasible", "infeasible", "softened")


@dataclass
class OcpSolution:
    """
    Per-agent decision blocks and everything derived from them.

    ``source`` tells whether the blocks came from the solver or from the
    shifted warm-start candidate chosen by the guard.
    """

    status: str
    blocks: List[np.ndarray]
    inputs: List[np.ndarray]
    states: List[np.ndarray]
    outputs: List[PeriodicTrajectory]
    aux: List[np.ndarray]
    ref_states: List[PeriodicTrajectory]
    ref_inputs: List[PeriodicTrajectory]
    objective: float
    costs: List[AgentCost]
    residuals: Dict[str, float]
    max_violation: float
    iterations: int = 0
    qp_iterations: int = 0
    failing_group: Optional[str] = None
    messages: MessageLog = field(default_factory=MessageLog)
    source: str = "solver"

    @classmethod
    def from_blocks(
        cls,
        problem: OcpProblem,
        blocks: Sequence[np.ndarray],
        status: str,
        iterations: int = 0,
        qp_iterations: int = 0,
        messages: Optional[MessageLog] = None,
        source: str = "solver",
        feasibility_tolerance: float = 1e-6,
    ) -> "OcpSolution":
        blocks = [np.asarray(z, dtype=float).copy() for z in blocks]
        decoded = problem.decode(blocks)
        costs = problem.agent_costs(blocks)
        residuals = problem.violations(blocks)
        worst = max(residuals.values()) if residuals else 0.0
        failing = None
        if worst > feasibility_tolerance:
            failing = max(residuals, key=residuals.get)
        return cls(
            status=status,
            blocks=blocks,
            inputs=decoded["inputs"],
            states=decoded["states"],
            outputs=decoded["outputs"],
            aux=decoded["aux"],
            ref_states=decoded["ref_states"],
            ref_inputs=decoded["ref_inputs"],
            objective=float(sum(c.total for c in costs)),
            costs=costs,
            residuals=residuals,
            max_violation=float(worst),
            iterations=iterations,
            qp_iterations=qp_iterations,
            failing_group=failing,
            messages=messages if messages is not None else MessageLog(),
            source=source,
        )

    @property
    def feasible(self) -> bool:
        return self.status != "infeasible" and self.failing_group is None

    @property
    def rounds(self) -> int:
        return self.messages.rounds

    def first_inputs(self) -> List[np.ndarray]:
        """u_i(0) of every agent, the input applied in closed loop; u_T,i(0) when N = 0."""
        return [u[0].copy() if u.shape[0] else ur.at(0) for u, ur in zip(self.inputs, self.ref_inputs)]

    def cooperation_value(self, problem: OcpProblem) -> float:
        """W evaluated at the solution's cooperation outputs."""
        return float(problem.objective.evaluate(problem.evaluate(self.blocks).coop()))
