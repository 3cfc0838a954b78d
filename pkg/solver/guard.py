"""
Suboptimality guard: never return something worse than the warm-start candidate.
"""
import logging
from typing import Optional, Sequence

import numpy as np

from ocp.problem import OcpProblem
from solver.solution import OcpSolution

logger = logging.getLogger(__name__)


def suboptimality_guard(
    candidate: Optional[Sequence[np.ndarray]],
    solved: OcpSolution,
    problem: OcpProblem,
    feasibility_tolerance: float = 1e-6,
) -> OcpSolution:
    """
    Pick the better of the candidate and the solver's result.

    Among the options meeting the feasibility tolerance, the one with the
    lower objective is returned. When neither is feasible the solver's
    result is returned unchanged so its infeasibility propagates.

    Args:
        candidate: Decision blocks of the shifted candidate, or None
        solved: Solver result
        problem: Problem both refer to
        feasibility_tolerance: Largest admissible constraint violation

    Returns:
        The chosen solution; ``source`` tells where it came from
    """
    if candidate is None:
        return solved
    fallback = OcpSolution.from_blocks(
        problem,
        candidate,
        status="suboptimal-feasible",
        iterations=solved.iterations,
        qp_iterations=solved.qp_iterations,
        messages=solved.messages,
        source="candidate",
        feasibility_tolerance=feasibility_tolerance,
    )
    solved_ok = solved.status != "infeasible" and solved.max_violation <= feasibility_tolerance
    candidate_ok = fallback.max_violation <= feasibility_tolerance
    if solved_ok and (not candidate_ok or solved.objective <= fallback.objective):
        return solved
    if candidate_ok:
        if solved_ok:
            logger.warning(
                f"solver objective {solved.objective:.6g} above candidate {fallback.objective:.6g}, using the candidate"
            )
        else:
            logger.warning(
                f"solver returned an infeasible point (violation {solved.max_violation:.2e}), using the candidate"
            )
        return fallback
    return solved
