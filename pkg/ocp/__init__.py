"""
OCP package initialization.
"""
from ocp.candidate import AgentCandidate, candidate_blocks, candidate_solution
from ocp.constraints import (
    FAMILIES,
    ConstraintGroup,
    build_constraint_groups,
    reference_consistency_constraints,
    tightened_coupling_constraints,
)
from ocp.costs import StageCost, factor_psd, min_stage_cost
from ocp.layout import BlockLayout
from ocp.problem import AgentCost, AgentSpec, Evaluation, OcpProblem, build_ocp
from ocp.terminal import TERMINAL_MODES, TerminalIngredients, lqr_terminal_synthesis

__all__ = [
    "AgentCandidate",
    "candidate_blocks",
    "candidate_solution",
    "FAMILIES",
    "ConstraintGroup",
    "build_constraint_groups",
    "reference_consistency_constraints",
    "tightened_coupling_constraints",
    "StageCost",
    "factor_psd",
    "min_stage_cost",
    "BlockLayout",
    "AgentCost",
    "AgentSpec",
    "Evaluation",
    "OcpProblem",
    "build_ocp",
    "TERMINAL_MODES",
    "TerminalIngredients",
    "lqr_terminal_synthesis",
]
