"""
Solver package initialization.
"""
from solver.admm import AdmmResult, AdmmState, QpSolution, solve_qp_admm, solve_qp_consensus_admm
from solver.guard import suboptimality_guard
from solver.messages import MessageLog
from solver.qp import DenseQpResult, GraphQp, LocalQp, solve_dense_qp
from solver.settings import AdmmSettings, SqpSettings
from solver.solution import STATUSES, OcpSolution
from solver.sqp import Subproblem, solve, solve_centralized

__all__ = [
    "AdmmResult",
    "AdmmState",
    "QpSolution",
    "solve_qp_admm",
    "solve_qp_consensus_admm",
    "suboptimality_guard",
    "MessageLog",
    "DenseQpResult",
    "GraphQp",
    "LocalQp",
    "solve_dense_qp",
    "AdmmSettings",
    "SqpSettings",
    "STATUSES",
    "OcpSolution",
    "Subproblem",
    "solve",
    "solve_centralized",
]
