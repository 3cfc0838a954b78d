"""
Decentralized sequential quadratic programming.

Every outer iteration linearizes the constraint groups and builds a
Gauss-Newton model of each agent's cost in scaled variables. The resulting
graph-structured QP is solved by consensus ADMM (or, for verification, by the
dense active-set oracle), and the step is globalized with an l1 merit line
search.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.errors import CoopMpcError
from ocp.problem import Evaluation, OcpProblem
from solver.admm import AdmmState, solve_qp_consensus_admm
from solver.messages import MessageLog
from solver.qp import GraphQp, LocalQp, solve_dense_qp
from solver.settings import AdmmSettings, SqpSettings
from solver.solution import OcpSolution

logger = logging.getLogger(__name__)

TRUST_REGION_GROUP = "trust_region"


@dataclass
class QpStep:
    step: List[np.ndarray]
    scaled_norm: float
    multipliers: float
    iterations: int
    converged: bool
    messages: MessageLog
    states: Optional[List[AdmmState]] = None


class Subproblem:
    """
    Scaled QP model of the problem around one point.

    Args:
        problem: Problem being solved
        ev: Evaluation at the linearization point
        settings: SQP settings
        penalty: l1 penalty weight; rows become soft when given
    """

    def __init__(self, problem: OcpProblem, ev: Evaluation, settings: SqpSettings, penalty: Optional[float] = None):
        self.problem = problem
        self.ev = ev
        self.settings = settings
        self.offsets = np.concatenate([[0], np.cumsum(problem.sizes)]).astype(int)
        self.scales = [problem.variable_scale(i) for i in range(problem.m)]
        self.local_maps: List[dict] = []
        self.gradients: List[np.ndarray] = []
        self.row_norms: List[np.ndarray] = []
        self.cost_scale = 1.0
        self.qp_graph = self._build(penalty)

    # ----- construction -----

    def _layout(self, i: int):
        problem = self.problem
        own = problem.sizes[i]
        local_map = {i: np.arange(own)}
        global_index = [self.offsets[i] + np.arange(own)]
        links = []
        if problem.shared[i].size:
            links.append((i, problem.shared[i].copy(), np.arange(problem.shared[i].size)))
        start = own
        for j in problem.graph.neighbors(i):
            shared = problem.shared[j]
            if not shared.size:
                continue
            positions = start + np.arange(shared.size)
            entry = np.full(problem.sizes[j], -1)
            entry[shared] = positions
            local_map[j] = entry
            global_index.append(self.offsets[j] + shared)
            links.append((j, positions, np.arange(shared.size)))
            start += shared.size
        return local_map, np.concatenate(global_index), links, start

    def _scatter(self, i: int, local_map: dict, j: int, block: np.ndarray, rows: np.ndarray, name: str):
        if j not in local_map:
            if np.any(block):
                raise CoopMpcError(f"group '{name}' of agent {i} reads agent {j} without a shared copy")
            return
        pos = local_map[j]
        held = pos >= 0
        if np.any(block[:, ~held]):
            raise CoopMpcError(f"group '{name}' of agent {i} reads variables of agent {j} outside its shared set")
        rows[:, pos[held]] += block[:, held]

    def _agent_model(self, i: int, local_map: dict, nv: int, coop) -> Tuple[np.ndarray, np.ndarray]:
        problem = self.problem
        ev = self.ev
        layout = problem.layouts[i]
        own = layout.size
        H = np.zeros((nv, nv))
        g = np.zeros(nv)

        rho, jac = problem.tracking_residual(i, ev, with_jacobian=True)
        H[:own, :own] += 2.0 * jac.T @ jac
        g[:own] += 2.0 * jac.T @ rho

        scaling = problem.scaling
        if problem.change_active:
            weight = 2.0 * scaling * problem.agents[i].change_weight
            y = ev.blocks[i][layout.y]
            idx = np.arange(layout.y.start, layout.y.stop)
            H[idx, idx] += weight
            g[idx] += weight * (y - problem.y_pr[i].samples.ravel())

        objective = problem.objective
        for j, grad in objective.term_gradient(i, coop).items():
            g[local_map[j][problem.layouts[j].coop]] += scaling * grad
        positions = np.concatenate([local_map[j][problem.layouts[j].coop] for j in objective.scope(i)])
        if positions.size:
            hess = objective.term_hessian(i, coop)
            if not objective.convex:
                values, vectors = np.linalg.eigh(hess)
                hess = (vectors * np.clip(values, 0.0, None)) @ vectors.T
            H[np.ix_(positions, positions)] += scaling * hess
        return H, g

    def _build(self, penalty: Optional[float]) -> GraphQp:
        problem = self.problem
        settings = self.settings
        coop = self.ev.coop()
        parts = []
        for i in range(problem.m):
            local_map, global_index, links, nv = self._layout(i)
            self.local_maps.append(local_map)
            H, g = self._agent_model(i, local_map, nv, coop)
            self.gradients.append(g.copy())

            blocks, lower, upper, row_groups = [], [], [], []
            row = 0
            for group in problem.groups[i]:
                r = group.residual(self.ev)
                rows = np.zeros((group.size, nv))
                for j, block in group.jacobian(self.ev).items():
                    self._scatter(i, local_map, j, block, rows, group.name)
                blocks.append(rows)
                lower.append(-r if group.is_equality else np.full(group.size, -np.inf))
                upper.append(-r)
                row_groups.append((group.name, slice(row, row + group.size)))
                row += group.size
            C = np.vstack(blocks) if blocks else np.zeros((0, nv))
            l = np.concatenate(lower) if lower else np.zeros(0)
            u = np.concatenate(upper) if upper else np.zeros(0)

            scale = np.concatenate([self.scales[i]] + [self.scales[j][problem.shared[j]] for j, _, _ in links if j != i])
            H = scale[:, None] * H * scale[None, :]
            g = scale * g
            C = C * scale[None, :]
            parts.append([i, H, g, C, l, u, global_index, problem.sizes[i], links, row_groups])

        top = max((float(np.max(np.abs(p[1]))) for p in parts if p[1].size), default=0.0)
        self.cost_scale = 1.0 / max(1.0, top)

        locals_ = []
        for i, H, g, C, l, u, global_index, own, links, row_groups in parts:
            H = self.cost_scale * H + settings.hessian_floor * np.eye(H.shape[0])
            g = self.cost_scale * g
            norms = np.max(np.abs(C), axis=1) if C.size else np.zeros(C.shape[0])
            norms = np.where(norms > 0.0, norms, 1.0)
            C = C / norms[:, None]
            l = l / norms
            u = u / norms
            self.row_norms.append(norms)
            soft = None if penalty is None else self.cost_scale * penalty * norms
            if problem.has_nonconvex_constraints:
                trust = np.zeros((own, H.shape[0]))
                trust[np.arange(own), np.arange(own)] = 1.0
                row_groups.append((TRUST_REGION_GROUP, slice(C.shape[0], C.shape[0] + own)))
                C = np.vstack([C, trust])
                l = np.concatenate([l, np.full(own, -settings.trust_region)])
                u = np.concatenate([u, np.full(own, settings.trust_region)])
                if soft is not None:
                    soft = np.concatenate([soft, np.full(own, np.inf)])
            locals_.append(LocalQp(
                agent=i, H=H, g=g, C=C, l=l, u=u, global_index=global_index, own_size=own,
                links=links, penalty=soft, row_groups=row_groups,
            ))
        return GraphQp(problem.graph, locals_, [s.size for s in problem.shared], int(self.offsets[-1]))

    # ----- solution -----

    def _unscale(self, scaled_own: Sequence[np.ndarray], multipliers: Sequence[np.ndarray]) -> Tuple[List[np.ndarray], float]:
        steps = [self.scales[i] * d for i, d in enumerate(scaled_own)]
        largest = 0.0
        for qp, y, norms in zip(self.qp_graph.locals, multipliers, self.row_norms):
            true = y[: norms.size] / (self.cost_scale * norms)
            if true.size:
                largest = max(largest, float(np.max(np.abs(true))))
        return steps, largest

    def solve(self, qp_solver: str, admm: AdmmSettings, warm: Optional[List[AdmmState]] = None) -> QpStep:
        qp_graph = self.qp_graph
        soft = any(qp.penalty is not None for qp in qp_graph.locals)
        if qp_solver == "dense" and not soft:
            H, g, C, l, u = qp_graph.to_dense()
            result = solve_dense_qp(H, g, C, l, u)
            scaled = [result.x[self.offsets[i]:self.offsets[i + 1]] for i in range(self.problem.m)]
            splits = np.cumsum([qp.rows for qp in qp_graph.locals])[:-1]
            multipliers = np.split(result.y, splits)
            steps, largest = self._unscale(scaled, multipliers)
            norm = max((float(np.max(np.abs(d))) for d in scaled if d.size), default=0.0)
            return QpStep(steps, norm, largest, result.iterations, result.converged, MessageLog())
        result = solve_qp_consensus_admm(qp_graph, admm, warm)
        scaled = [w[: qp.own_size] for w, qp in zip(result.w, qp_graph.locals)]
        steps, largest = self._unscale(scaled, result.y)
        norm = max((float(np.max(np.abs(d))) for d in scaled if d.size), default=0.0)
        return QpStep(steps, norm, largest, result.iterations, result.converged, result.messages, result.states)

    def directional_derivative(self, steps: Sequence[np.ndarray]) -> float:
        """g^T d of the objective model along the step."""
        flat = np.concatenate(steps) if steps else np.zeros(0)
        return float(sum(g @ flat[qp.global_index] for g, qp in zip(self.gradients, self.qp_graph.locals)))


def _warm_duals(states: Optional[List[AdmmState]]) -> Optional[List[AdmmState]]:
    if states is None:
        return None
    return [AdmmState(w=np.zeros_like(st.w), s=st.s.copy(), y=st.y.copy(), lam=st.lam.copy()) for st in states]


def _merit(problem: OcpProblem, blocks: Sequence[np.ndarray], mu: float) -> Tuple[float, float]:
    ev = problem.evaluate(blocks)
    violation = problem.l1_violation(ev)
    return problem.objective_value(ev.blocks) + mu * violation, violation


def solve(
    problem: OcpProblem,
    warm: Optional[Sequence[np.ndarray]] = None,
    sqp: Optional[SqpSettings] = None,
    admm: Optional[AdmmSettings] = None,
) -> OcpSolution:
    """
    Solve the problem by SQP with a consensus ADMM inner solver.

    Args:
        problem: Problem instance
        warm: Initial decision blocks, the problem's hold-reference guess when omitted
        sqp: Outer loop settings
        admm: Inner solver settings

    Returns:
        Solution with status "optimal", "suboptimal-feasible" or "infeasible";
        "softened" when the settings carry a soft penalty and the result
        violates the constraints
    """
    sqp = sqp or SqpSettings()
    admm = admm or AdmmSettings()
    blocks = [np.array(z, dtype=float) for z in (warm if warm is not None else problem.initial_guess())]
    soft_penalty = sqp.soft_penalty
    mu = soft_penalty if soft_penalty is not None else sqp.merit_penalty
    log = MessageLog()
    admm_states = None
    qp_iterations = 0
    previous_violation = None
    converged = False
    iteration = 0

    for iteration in range(1, sqp.max_iterations + 1):
        ev = problem.evaluate(blocks)
        violation = problem.l1_violation(ev)
        worst = max(problem.violations(blocks, ev).values(), default=0.0)

        sub = Subproblem(problem, ev, sqp, penalty=soft_penalty)
        step = sub.solve(sqp.qp_solver, admm, _warm_duals(admm_states))
        if not step.converged and soft_penalty is None and sqp.qp_solver == "admm":
            logger.debug(f"sqp iteration {iteration}: QP not solved, retrying with elastic constraints")
            sub = Subproblem(problem, ev, sqp, penalty=max(mu, 1.0))
            step = sub.solve(sqp.qp_solver, admm, None)
        log.extend(step.messages)
        qp_iterations += step.iterations
        admm_states = step.states

        if soft_penalty is None:
            mu = max(mu, 2.0 * step.multipliers)
            if previous_violation is not None and violation > previous_violation + 1e-12:
                mu *= 2.0
        logger.debug(
            f"sqp iteration {iteration}: step {step.scaled_norm:.3e}, violation {worst:.3e}, "
            f"qp iterations {step.iterations}, merit penalty {mu:.3g}"
        )
        if step.scaled_norm <= sqp.stationarity_tolerance:
            converged = worst <= sqp.feasibility_tolerance
            break

        merit, _ = _merit(problem, blocks, mu)
        slope = sub.directional_derivative(step.step) - mu * violation
        alpha = 1.0
        accepted = False
        while alpha >= sqp.min_step:
            trial = [z + alpha * d for z, d in zip(blocks, step.step)]
            trial_merit, _ = _merit(problem, trial, mu)
            if trial_merit <= merit + sqp.armijo_slope * alpha * min(slope, 0.0):
                accepted = True
                break
            alpha *= sqp.armijo_factor
        if not accepted:
            logger.debug(f"sqp iteration {iteration}: line search stalled at merit {merit:.6g}")
            break
        blocks = trial
        previous_violation = violation

    log.check_locality(problem.graph)
    solution = OcpSolution.from_blocks(
        problem, blocks, status="optimal", iterations=iteration, qp_iterations=qp_iterations,
        messages=log, feasibility_tolerance=sqp.feasibility_tolerance,
    )
    if solution.max_violation > sqp.feasibility_tolerance:
        solution.status = "softened" if soft_penalty is not None else "infeasible"
    elif not converged:
        solution.status = "suboptimal-feasible"
    logger.debug(
        f"sqp finished: status {solution.status}, objective {solution.objective:.6g}, "
        f"iterations {iteration}, rounds {log.rounds}"
    )
    return solution


def solve_centralized(
    problem: OcpProblem,
    warm: Optional[Sequence[np.ndarray]] = None,
    sqp: Optional[SqpSettings] = None,
) -> OcpSolution:
    """Same SQP with the dense active-set QP oracle instead of ADMM."""
    sqp = (sqp or SqpSettings()).model_copy(update={"qp_solver": "dense"})
    return solve(problem, warm, sqp)
