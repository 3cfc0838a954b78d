"""
Consensus ADMM for graph-structured QPs.

Every agent runs an operator-splitting iteration on its local QP
(constraints split as C w = s, s in [l, u]) with an extra consensus split
that ties its copies of shared variables to the owner's consensus value.
Per iteration the holders send their relaxed copies to the owner (gather)
and the owner sends the averaged value back (scatter); both rounds are
recorded in the message log.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import linalg

from core.graph import Graph
from solver.messages import MessageLog
from solver.qp import GraphQp, LocalQp
from solver.settings import AdmmSettings

logger = logging.getLogger(__name__)

FREE_ROW_SCALE = 1e-6
RHO_BOUNDS = (1e-6, 1e6)


@dataclass
class AdmmState:
    """Iterates of one agent."""

    w: np.ndarray
    s: np.ndarray
    y: np.ndarray
    lam: np.ndarray


@dataclass
class AdmmResult:
    states: List[AdmmState]
    shared: List[np.ndarray]
    iterations: int
    converged: bool
    primal_residual: float
    dual_residual: float
    rho: float
    messages: MessageLog

    @property
    def w(self) -> List[np.ndarray]:
        return [st.w for st in self.states]

    @property
    def y(self) -> List[np.ndarray]:
        return [st.y for st in self.states]


@dataclass
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    converged: bool
    iterations: int


class _Agent:
    """Factorisation and scratch data of one local QP."""

    def __init__(self, qp: LocalQp, settings: AdmmSettings, rho: float):
        self.qp = qp
        self.settings = settings
        eq = np.isclose(qp.l, qp.u) & np.isfinite(qp.l)
        free = ~np.isfinite(qp.l) & ~np.isfinite(qp.u)
        self.row_weight = np.where(eq, settings.equality_scale, np.where(free, FREE_ROW_SCALE, 1.0))
        self.mask = qp.shared_mask()
        self.factor(rho)

    def factor(self, rho: float):
        qp = self.qp
        self.rho = rho
        self.row_rho = rho * self.row_weight
        kkt = qp.H + self.settings.sigma * np.eye(qp.size) + qp.C.T @ (self.row_rho[:, None] * qp.C)
        kkt[np.diag_indices_from(kkt)] += rho * self.mask
        self.chol = linalg.cho_factor(kkt)

    def consensus_view(self, shared: Sequence[np.ndarray]) -> np.ndarray:
        """Owner's consensus values at every linked local position, as a full local vector."""
        view = np.zeros(self.qp.size)
        for owner, positions, indices in self.qp.links:
            view[positions] = shared[owner][indices]
        return view

    def project(self, v: np.ndarray) -> np.ndarray:
        qp = self.qp
        if qp.penalty is None:
            return np.clip(v, qp.l, qp.u)
        shrink = qp.penalty / self.row_rho
        above = np.maximum(qp.u, v - shrink)
        below = np.minimum(qp.l, v + shrink)
        return np.where(v > qp.u, above, np.where(v < qp.l, below, v))

    def iterate(self, st: AdmmState, consensus: np.ndarray) -> np.ndarray:
        """One local update; returns the relaxed copies handed to the owners."""
        qp = self.qp
        alpha = self.settings.relaxation
        rhs = self.settings.sigma * st.w - qp.g + qp.C.T @ (self.row_rho * st.s - st.y)
        rhs += self.mask * (self.rho * consensus - st.lam)
        w_tilde = linalg.cho_solve(self.chol, rhs)
        z_tilde = qp.C @ w_tilde
        s_old = st.s
        s_new = self.project(alpha * z_tilde + (1.0 - alpha) * s_old + st.y / self.row_rho)
        st.y = st.y + self.row_rho * (alpha * z_tilde + (1.0 - alpha) * s_old - s_new)
        st.s = s_new
        st.w = w_tilde
        return self.mask * (alpha * w_tilde + (1.0 - alpha) * consensus)


def _average(qp_graph: GraphQp, agents: List[_Agent], contributions: List[np.ndarray]) -> List[np.ndarray]:
    sums = [np.zeros(size) for size in qp_graph.shared_sizes]
    counts = [np.zeros(size) for size in qp_graph.shared_sizes]
    for agent, value in zip(agents, contributions):
        for owner, positions, indices in agent.qp.links:
            sums[owner][indices] += value[positions]
            counts[owner][indices] += 1.0
    return [s / np.maximum(c, 1.0) for s, c in zip(sums, counts)]


def _log_round(log: MessageLog, qp_graph: GraphQp, gather: bool):
    index = log.next_round()
    for qp in qp_graph.locals:
        for owner, positions, _ in qp.links:
            if owner == qp.agent:
                continue
            if gather:
                log.record(index, qp.agent, owner, positions.size)
            else:
                log.record(index, owner, qp.agent, positions.size)


def _initial_states(qp_graph: GraphQp, warm: Optional[List[AdmmState]], settings: AdmmSettings) -> List[AdmmState]:
    states = []
    for k, qp in enumerate(qp_graph.locals):
        w = np.zeros(qp.size)
        y = np.zeros(qp.rows)
        lam = np.zeros(qp.size)
        if warm is not None:
            if warm[k].w.size == qp.size:
                w = warm[k].w.copy()
            if settings.warm_start_duals and warm[k].y.size == qp.rows and warm[k].lam.size == qp.size:
                y = warm[k].y.copy()
                lam = warm[k].lam.copy()
        states.append(AdmmState(w=w, s=np.clip(qp.C @ w, qp.l, qp.u), y=y, lam=lam))
    return states


def solve_qp_consensus_admm(
    qp_graph: GraphQp,
    settings: Optional[AdmmSettings] = None,
    warm: Optional[List[AdmmState]] = None,
) -> AdmmResult:
    """
    Solve a graph-structured QP by consensus ADMM.

    Args:
        qp_graph: Local QPs with their shared-variable links
        settings: ADMM settings
        warm: Iterates of a previous solve to start from

    Returns:
        Local iterates, consensus values and residuals; ``converged`` is False
        when the iteration cap was hit, in which case the last iterate is returned
    """
    settings = settings or AdmmSettings()
    rho = settings.rho
    agents = [_Agent(qp, settings, rho) for qp in qp_graph.locals]
    states = _initial_states(qp_graph, warm, settings)
    log = MessageLog()

    _log_round(log, qp_graph, gather=True)
    shared = _average(qp_graph, agents, [a.mask * st.w for a, st in zip(agents, states)])
    _log_round(log, qp_graph, gather=False)

    executor = ThreadPoolExecutor(max_workers=settings.workers) if settings.workers > 1 else None
    mapper: Callable = executor.map if executor is not None else map

    converged = False
    primal = dual = np.inf
    iteration = 0
    try:
        for iteration in range(1, settings.max_iterations + 1):
            views = [a.consensus_view(shared) for a in agents]
            relaxed = list(mapper(lambda k: agents[k].iterate(states[k], views[k]), range(len(agents))))
            _log_round(log, qp_graph, gather=True)
            contributions = [r + a.mask * st.lam / a.rho for r, a, st in zip(relaxed, agents, states)]
            new_shared = _average(qp_graph, agents, contributions)
            _log_round(log, qp_graph, gather=False)

            primal = dual = 0.0
            primal_scale = dual_scale = 0.0
            for a, st, r, old_view in zip(agents, states, relaxed, views):
                view = a.consensus_view(new_shared)
                st.lam = st.lam + a.rho * (r - a.mask * view)
                qp = a.qp
                cw = qp.C @ st.w
                hw = qp.H @ st.w
                cty = qp.C.T @ st.y
                primal = max(primal, _inf_norm(cw - st.s), _inf_norm(a.mask * (st.w - view)))
                dual = max(dual, _inf_norm(hw + qp.g + cty + st.lam), a.rho * _inf_norm(view - old_view))
                primal_scale = max(primal_scale, _inf_norm(cw), _inf_norm(st.s))
                dual_scale = max(dual_scale, _inf_norm(hw), _inf_norm(cty), _inf_norm(qp.g))
            shared = new_shared

            eps_primal = settings.primal_tolerance + settings.relative_tolerance * primal_scale
            eps_dual = settings.dual_tolerance + settings.relative_tolerance * dual_scale
            if iteration % 50 == 0:
                logger.debug(f"admm iteration {iteration}: primal {primal:.3e}, dual {dual:.3e}, rho {rho:.3e}")
            if primal <= eps_primal and dual <= eps_dual:
                converged = True
                break

            if settings.adaptive_rho and iteration % settings.adaptive_interval == 0 and primal > 0 and dual > 0:
                ratio = np.sqrt((primal / max(primal_scale, 1e-12)) / (dual / max(dual_scale, 1e-12)))
                if ratio > 5.0 or ratio < 0.2:
                    rho = float(np.clip(rho * ratio, *RHO_BOUNDS))
                    for a in agents:
                        a.factor(rho)
    finally:
        if executor is not None:
            executor.shutdown()

    if not converged:
        logger.debug(f"admm hit the iteration cap ({settings.max_iterations}): primal {primal:.3e}, dual {dual:.3e}")
    return AdmmResult(
        states=states,
        shared=shared,
        iterations=iteration,
        converged=converged,
        primal_residual=float(primal),
        dual_residual=float(dual),
        rho=rho,
        messages=log,
    )


def _inf_norm(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def solve_qp_admm(
    P: np.ndarray,
    q: np.ndarray,
    A: np.ndarray,
    l: np.ndarray,
    u: np.ndarray,
    settings: Optional[AdmmSettings] = None,
) -> QpSolution:
    """
    Solve min 1/2 x^T P x + q^T x subject to l <= A x <= u with a single agent.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    q = np.asarray(q, dtype=float).ravel()
    A = np.asarray(A, dtype=float).reshape(-1, q.size)
    local = LocalQp(
        agent=0,
        H=P,
        g=q,
        C=A,
        l=np.asarray(l, dtype=float).ravel(),
        u=np.asarray(u, dtype=float).ravel(),
        global_index=np.arange(q.size),
        own_size=q.size,
    )
    result = solve_qp_consensus_admm(GraphQp(Graph.empty(1), [local], [0], q.size), settings)
    return QpSolution(x=result.w[0], y=result.y[0], converged=result.converged, iterations=result.iterations)
