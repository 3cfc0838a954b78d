"""
Shifted warm-start candidate for the successor state.

The previous optimal inputs are shifted by one step and the terminal
controller is appended; references and cooperation outputs are shifted by
one sample along their period. Auxiliary cooperation variables are kept.
"""
from dataclasses import dataclass
from typing import TYPE_CHECKING, List

import numpy as np

from core.errors import DimensionMismatchError, TerminalSetExitError
from core.trajectory import PeriodicTrajectory, shift_periodic
from models.base import AgentModel
from ocp.terminal import TerminalIngredients

if TYPE_CHECKING:
    from ocp.problem import OcpProblem
    from solver.solution import OcpSolution


@dataclass
class AgentCandidate:
    inputs: np.ndarray
    outputs: PeriodicTrajectory
    aux: np.ndarray
    ref_states: PeriodicTrajectory
    ref_inputs: PeriodicTrajectory


def candidate_solution(
    prev: "OcpSolution",
    terminal: TerminalIngredients,
    model: AgentModel,
    agent: int,
) -> AgentCandidate:
    """
    Candidate of one agent built from the previous solution.

    Raises:
        TerminalSetExitError: The predicted terminal state left X_f
    """
    u = prev.inputs[agent]
    states = prev.states[agent]
    horizon = u.shape[0]
    x_ref = prev.ref_states[agent]
    u_ref = prev.ref_inputs[agent]
    x_end = states[horizon]
    if not terminal.is_equality and not terminal.contains(x_end, x_ref.at(horizon)):
        raise TerminalSetExitError(
            f"agent {agent}: terminal state outside X_f "
            f"(level {terminal.level(x_end, x_ref.at(horizon)):.3g} > {terminal.alpha:.3g})"
        )
    if horizon > 0:
        appended = terminal.control(x_end, x_ref.at(horizon), u_ref.at(horizon))
        inputs = np.vstack([u[1:], appended.reshape(1, model.q)])
    else:
        inputs = np.zeros((0, model.q))
    return AgentCandidate(
        inputs=inputs,
        outputs=shift_periodic(prev.outputs[agent], 1),
        aux=np.array(prev.aux[agent], dtype=float),
        ref_states=shift_periodic(x_ref, 1),
        ref_inputs=shift_periodic(u_ref, 1),
    )


def candidate_blocks(prev: "OcpSolution", problem: "OcpProblem") -> List[np.ndarray]:
    """Decision blocks of the candidate, laid out for ``problem``."""
    if len(prev.inputs) != problem.m:
        raise DimensionMismatchError(f"previous solution has {len(prev.inputs)} agents, problem has {problem.m}")
    blocks = []
    for i, spec in enumerate(problem.agents):
        layout = problem.layouts[i]
        if prev.inputs[i].shape[0] != layout.horizon or prev.outputs[i].period != layout.period:
            raise DimensionMismatchError(f"agent {i}: previous solution does not match horizon and period")
        cand = candidate_solution(prev, spec.terminal, spec.model, i)
        blocks.append(
            layout.assemble(cand.inputs, cand.outputs.samples, cand.aux, cand.ref_states.samples, cand.ref_inputs.samples)
        )
    return blocks
