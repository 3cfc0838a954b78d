"""
The optimal control problem solved at every time step.

Each agent owns the decision vector z_i = [u_i | y_T,i | aux_i | x_T,i | u_T,i]
and the cost
    J_i = sum_k l_i(x_i(k), u_i(k), x_T,i(k), u_T,i(k)) + V_f,i
          + lambda(N) (V_i^change + W_i),
where predicted states follow from single shooting of x_i(0) under u_i.
"""
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np

from cooperation.candidates import CooperationSet
from cooperation.objectives import CooperationObjective, CoopVector
from cooperation.penalties import Scaling
from core.errors import ConfigurationError, DimensionMismatchError
from core.graph import Graph
from core.trajectory import PeriodicTrajectory
from models.base import AgentModel, Box, CouplingConstraint
from ocp.constraints import FAMILIES, ConstraintGroup, build_constraint_groups
from ocp.costs import StageCost
from ocp.layout import BlockLayout
from ocp.terminal import TerminalIngredients

if TYPE_CHECKING:
    from scenarios.builder import Scenario

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AgentSpec:
    """
    Everything the problem needs to know about one agent.

    ``reference_state_box``/``reference_input_box`` describe the admissible
    references (components with equal bounds are pinned); ``output_box`` and
    ``aux_box`` bound the cooperation vector. ``state_drift`` is the change
    of the reference state over one period (2 pi on an unwrapped angle).
    """

    model: AgentModel
    stage_cost: StageCost
    terminal: TerminalIngredients
    reference_state_box: Box
    reference_input_box: Box
    output_box: Box
    aux_box: Optional[Box] = None
    state_drift: Optional[np.ndarray] = None
    change_weight: float = 0.0
    reference_path_margin: float = 0.0
    output_polytope: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        model = self.model
        if self.stage_cost.n != model.n or self.stage_cost.q != model.q:
            raise DimensionMismatchError(f"stage cost does not match model '{model.name}'")
        if self.reference_state_box.dim != model.n or self.reference_input_box.dim != model.q:
            raise DimensionMismatchError(f"reference boxes do not match model '{model.name}'")
        if self.output_box.dim != model.p:
            raise DimensionMismatchError(f"output box of size {self.output_box.dim} for p={model.p}")
        drift = np.zeros(model.n) if self.state_drift is None else np.asarray(self.state_drift, dtype=float)
        if drift.size != model.n:
            raise DimensionMismatchError(f"state drift of size {drift.size} for n={model.n}")
        object.__setattr__(self, "state_drift", drift)
        if self.change_weight < 0:
            raise ConfigurationError("change penalty weight must be non-negative", "change_weight")

    @property
    def aux_dim(self) -> int:
        return 0 if self.aux_box is None else self.aux_box.dim

    @property
    def output_drift(self) -> np.ndarray:
        c, _ = self.model.output_jacobians(np.zeros(self.model.n), np.zeros(self.model.q))
        return c @ self.state_drift

    def cooperation_set(self, period: int) -> CooperationSet:
        a, b = self.output_polytope if self.output_polytope is not None else (None, None)
        return CooperationSet(period, self.output_box, self.aux_box, a, b)


@dataclass
class AgentCost:
    """Cost terms of one agent; ``total`` applies lambda(N) to change and cooperation terms."""

    tracking: float
    terminal: float
    change: float
    cooperation: float
    scaling: float

    @property
    def total(self) -> float:
        return self.tracking + self.terminal + self.scaling * (self.change + self.cooperation)


class Evaluation:
    """Lazily computed predictions and sensitivities at one point."""

    def __init__(self, problem: "OcpProblem", blocks: Sequence[np.ndarray]):
        if len(blocks) != problem.m:
            raise DimensionMismatchError(f"{len(blocks)} decision blocks for {problem.m} agents")
        self.problem = problem
        self.blocks = [np.asarray(z, dtype=float) for z in blocks]
        for i, z in enumerate(self.blocks):
            if z.size != problem.layouts[i].size:
                raise DimensionMismatchError(f"agent {i}: decision block of size {z.size}, expected {problem.layouts[i].size}")
        self._states: Dict[int, np.ndarray] = {}
        self._sens: Dict[int, np.ndarray] = {}

    def states(self, i: int) -> np.ndarray:
        if i not in self._states:
            self._states[i] = self.problem.predict(i, self.blocks[i])
        return self._states[i]

    def sensitivity(self, i: int) -> np.ndarray:
        if i not in self._sens:
            states, sens = self.problem.predict_with_sensitivity(i, self.blocks[i])
            self._states[i] = states
            self._sens[i] = sens
        return self._sens[i]

    def ref_state(self, i: int, k: int) -> np.ndarray:
        return self.problem.lifted_ref_state(i, self.blocks[i], k)

    def ref_input(self, i: int, k: int) -> np.ndarray:
        layout = self.problem.layouts[i]
        return layout.ref_inputs(self.blocks[i])[k % layout.period]

    def coop(self) -> CoopVector:
        return {i: self.blocks[i][self.problem.layouts[i].coop] for i in range(self.problem.m)}


class OcpProblem:
    """
    Optimal control problem of all agents at one time step.

    Args:
        agents: Agent specifications
        graph: Communication graph
        objective: Cooperation objective for the period
        scaling: lambda(N)
        coupling: Pairwise coupling constraint on every edge, or None
        reference_coupling: Impose the tightened coupling on references
        x0: Current state per agent
        y_pr: Previous cooperation output per agent; None omits the change penalty
        horizon: Prediction horizon N
        period: Reference period T
        time: Absolute time, passed to time-varying objectives
    """

    def __init__(
        self,
        agents: Sequence[AgentSpec],
        graph: Graph,
        objective: CooperationObjective,
        scaling: Scaling,
        coupling: Optional[CouplingConstraint],
        reference_coupling: bool,
        x0: Sequence[np.ndarray],
        y_pr: Optional[Sequence[PeriodicTrajectory]],
        horizon: int,
        period: int,
        time: int = 0,
    ):
        if horizon < 0:
            raise ConfigurationError("horizon must be non-negative", "horizon")
        if period < 1:
            raise ConfigurationError("period must be at least 1", "period")
        if not (len(agents) == graph.m == len(x0)):
            raise DimensionMismatchError("agents, graph and initial states disagree on the agent count")
        if objective.period != period or objective.m != graph.m:
            raise DimensionMismatchError(
                f"objective built for period {objective.period} and {objective.m} agents, problem has {period} and {graph.m}"
            )
        self.agents = list(agents)
        self.graph = graph
        self.time = int(time)
        self.objective = objective.at_time(self.time)
        self.scaling = scaling(horizon)
        self.coupling = coupling
        self.reference_coupling = bool(reference_coupling and coupling is not None)
        self.horizon = int(horizon)
        self.period = int(period)
        self.x0 = []
        for i, (spec, x) in enumerate(zip(self.agents, x0)):
            x = np.asarray(x, dtype=float).ravel()
            if x.size != spec.model.n:
                raise DimensionMismatchError(f"agent {i}: state of size {x.size}, model has n={spec.model.n}")
            if objective.output_dims[i] != spec.model.p or objective.aux_dims[i] != spec.aux_dim:
                raise DimensionMismatchError(f"agent {i}: objective dimensions do not match the agent")
            self.x0.append(x)
        self.y_pr = None
        if y_pr is not None:
            if len(y_pr) != self.m:
                raise DimensionMismatchError(f"{len(y_pr)} previous outputs for {self.m} agents")
            for i, traj in enumerate(y_pr):
                if traj.period != period or traj.dim != self.agents[i].model.p:
                    raise DimensionMismatchError(f"agent {i}: previous output of shape {traj.samples.shape}")
            self.y_pr = list(y_pr)

        self.layouts = [
            BlockLayout(self.horizon, self.period, a.model.n, a.model.q, a.model.p, a.aux_dim) for a in self.agents
        ]
        self.coop_sets = [a.cooperation_set(self.period) for a in self.agents]
        self.state_drifts = [a.state_drift for a in self.agents]
        self.output_drifts = [a.output_drift for a in self.agents]
        self.groups: List[List[ConstraintGroup]] = build_constraint_groups(self)
        self.shared = self._shared_indices()

    # ----- structure -----

    @property
    def m(self) -> int:
        return self.graph.m

    @property
    def change_active(self) -> bool:
        return self.y_pr is not None

    @property
    def sizes(self) -> List[int]:
        return [layout.size for layout in self.layouts]

    @property
    def has_nonconvex_constraints(self) -> bool:
        return self.coupling is not None or any(a.model.path_constraints for a in self.agents)

    def all_groups(self) -> List[ConstraintGroup]:
        return [g for groups in self.groups for g in groups]

    def _shared_indices(self) -> List[np.ndarray]:
        """Indices of z_j read by at least one neighbour of j."""
        needed = [set() for _ in range(self.m)]
        for i in range(self.m):
            reads: Dict[int, set] = {}
            for group in self.groups[i]:
                for j, idx in group.reads().items():
                    if j != i:
                        reads.setdefault(j, set()).update(int(k) for k in idx)
            for j in self.objective.scope(i):
                if j != i:
                    coop = self.layouts[j].coop
                    reads.setdefault(j, set()).update(range(coop.start, coop.stop))
            for j, idx in reads.items():
                if not self.graph.has_edge(i, j):
                    raise ConfigurationError(f"agent {i} reads agent {j}, which is not a neighbour", "graph")
                needed[j].update(idx)
        return [np.array(sorted(s), dtype=int) for s in needed]

    def split(self, flat: np.ndarray) -> List[np.ndarray]:
        flat = np.asarray(flat, dtype=float).ravel()
        if flat.size != sum(self.sizes):
            raise DimensionMismatchError(f"decision vector of size {flat.size}, expected {sum(self.sizes)}")
        return [chunk.copy() for chunk in np.split(flat, np.cumsum(self.sizes)[:-1])]

    def join(self, blocks: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(z, dtype=float).ravel() for z in blocks])

    # ----- predictions -----

    def predict(self, i: int, z: np.ndarray) -> np.ndarray:
        layout = self.layouts[i]
        model = self.agents[i].model
        u = layout.inputs(z)
        states = np.empty((self.horizon + 1, model.n))
        states[0] = self.x0[i]
        for k in range(self.horizon):
            states[k + 1] = model.step(states[k], u[k])
        return states

    def predict_with_sensitivity(self, i: int, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Predicted states and d x(k) / d u, shape (N+1, n, N q)."""
        layout = self.layouts[i]
        model = self.agents[i].model
        u = layout.inputs(z)
        nq = self.horizon * model.q
        states = np.empty((self.horizon + 1, model.n))
        sens = np.zeros((self.horizon + 1, model.n, nq))
        states[0] = self.x0[i]
        for k in range(self.horizon):
            a, b = model.jacobians(states[k], u[k])
            states[k + 1] = model.step(states[k], u[k])
            sens[k + 1] = a @ sens[k]
            sens[k + 1][:, layout.u_index(k)] += b
        return states, sens

    def lifted_ref_state(self, i: int, z: np.ndarray, k: int) -> np.ndarray:
        xs = self.layouts[i].ref_states(z)
        return xs[k % self.period] + (k // self.period) * self.state_drifts[i]

    def evaluate(self, blocks: Sequence[np.ndarray]) -> Evaluation:
        return Evaluation(self, blocks)

    # ----- objective -----

    def tracking_residual(self, i: int, ev: Evaluation, with_jacobian: bool = False):
        """
        Stacked residual rho with J_tracking + V_f = ||rho||^2, and optionally
        d rho / d z_i. Quadratic terminal costs contribute the last rows.
        """
        layout = self.layouts[i]
        spec = self.agents[i]
        n, q = spec.model.n, spec.model.q
        lq, lr = spec.stage_cost.sqrt_q, spec.stage_cost.sqrt_r
        z = ev.blocks[i]
        sens = ev.sensitivity(i) if with_jacobian else None
        states = ev.states(i)
        u = layout.inputs(z)
        u_ref = layout.ref_inputs(z)
        terminal = spec.terminal
        rows = self.horizon * (n + q) + (0 if terminal.is_equality else n)
        rho = np.zeros(rows)
        jac = np.zeros((rows, layout.size)) if with_jacobian else None
        lp = None if terminal.is_equality else np.linalg.cholesky(terminal.P).T
        row = 0
        for k in range(self.horizon):
            tau = k % self.period
            rho[row:row + n] = lq @ (states[k] - self.lifted_ref_state(i, z, k))
            if with_jacobian:
                jac[row:row + n, layout.u] = lq @ sens[k]
                jac[row:row + n, layout.x_ref_index(tau)] -= lq
            row += n
            rho[row:row + q] = lr @ (u[k] - u_ref[tau])
            if with_jacobian:
                jac[row:row + q, layout.u_index(k)] = lr
                jac[row:row + q, layout.u_ref_index(tau)] -= lr
            row += q
        if lp is not None:
            k = self.horizon
            rho[row:row + n] = lp @ (states[k] - self.lifted_ref_state(i, z, k))
            if with_jacobian:
                jac[row:row + n, layout.u] = lp @ sens[k]
                jac[row:row + n, layout.x_ref_index(k % self.period)] -= lp
        return rho, jac

    def agent_cost(self, i: int, ev: Evaluation, coop: Optional[CoopVector] = None) -> AgentCost:
        layout = self.layouts[i]
        spec = self.agents[i]
        z = ev.blocks[i]
        states = ev.states(i)
        u = layout.inputs(z)
        u_ref = layout.ref_inputs(z)
        tracking = sum(
            spec.stage_cost(states[k], u[k], self.lifted_ref_state(i, z, k), u_ref[k % self.period])
            for k in range(self.horizon)
        )
        terminal = spec.terminal.cost(states[self.horizon], self.lifted_ref_state(i, z, self.horizon))
        change = 0.0
        if self.change_active:
            change = spec.change_weight * float(np.sum((layout.outputs(z) - self.y_pr[i].samples) ** 2))
        coop = ev.coop() if coop is None else coop
        return AgentCost(
            tracking=float(tracking),
            terminal=float(terminal),
            change=change,
            cooperation=float(self.objective.term(i, coop)),
            scaling=self.scaling,
        )

    def agent_costs(self, blocks: Sequence[np.ndarray]) -> List[AgentCost]:
        ev = self.evaluate(blocks)
        coop = ev.coop()
        return [self.agent_cost(i, ev, coop) for i in range(self.m)]

    def objective_value(self, blocks: Sequence[np.ndarray]) -> float:
        """Sum of J_i in agent order."""
        return float(sum(c.total for c in self.agent_costs(blocks)))

    # ----- constraints -----

    def residuals(self, blocks: Sequence[np.ndarray]) -> Dict[str, np.ndarray]:
        ev = self.evaluate(blocks)
        collected: Dict[str, List[np.ndarray]] = {}
        for group in self.all_groups():
            collected.setdefault(group.name, []).append(group.residual(ev))
        return {name: np.concatenate(parts) for name, parts in collected.items()}

    def violations(self, blocks: Sequence[np.ndarray], ev: Optional[Evaluation] = None) -> Dict[str, float]:
        """Largest violation per group name."""
        ev = self.evaluate(blocks) if ev is None else ev
        worst: Dict[str, float] = {}
        for group in self.all_groups():
            v = group.violation(group.residual(ev))
            worst[group.name] = max(worst.get(group.name, 0.0), float(v.max()) if v.size else 0.0)
        return worst

    def l1_violation(self, ev: Evaluation) -> float:
        return float(sum(np.sum(g.violation(g.residual(ev))) for g in self.all_groups()))

    def max_violation(self, blocks: Sequence[np.ndarray]) -> float:
        worst = self.violations(blocks)
        return max(worst.values()) if worst else 0.0

    def completeness_audit(self, declared: Sequence[str] = ("path", "terminal", "reference", "admissible")) -> Dict[str, int]:
        """
        Row counts per constraint family; a declared family without rows is an error.

        Coupling is declared automatically when the scenario carries a
        coupling constraint and the graph has an edge.
        """
        declared = list(declared)
        if self.coupling is not None and self.graph.edges and self.horizon > 0:
            declared.append("coupling")
        counts = {family: 0 for family in FAMILIES}
        for group in self.all_groups():
            counts[group.family] += group.size
        missing = [f for f in declared if counts[f] == 0]
        if missing:
            raise ConfigurationError(f"constraint families without rows: {', '.join(missing)}", "constraints")
        return counts

    # ----- variables -----

    def variable_scale(self, i: int) -> np.ndarray:
        """Typical magnitude of every entry of z_i."""
        layout = self.layouts[i]
        model = self.agents[i].model
        cx, du = model.output_jacobians(self.x0[i], np.zeros(model.q))
        y_scale = np.abs(cx) @ model.state_scale + np.abs(du) @ model.input_scale
        y_scale = np.where(y_scale > 0.0, y_scale, 1.0)
        return np.concatenate([
            np.tile(model.input_scale, self.horizon),
            np.tile(y_scale, self.period),
            np.ones(layout.a),
            np.tile(model.state_scale, self.period),
            np.tile(model.input_scale, self.period),
        ])

    def initial_guess(self) -> List[np.ndarray]:
        """Hold references at the current states and inputs equal to the reference inputs."""
        blocks = []
        for i, spec in enumerate(self.agents):
            layout = self.layouts[i]
            x_ref, u_ref = spec.model.hold_reference(self.x0[i], self.period)
            y_ref = np.array([spec.model.output(x_ref[tau], u_ref[tau]) for tau in range(self.period)])
            aux = np.zeros(layout.a) if spec.aux_box is None else _aux_start(spec.aux_box)
            u = np.array([u_ref[k % self.period] for k in range(self.horizon)]).reshape(self.horizon, spec.model.q)
            blocks.append(layout.assemble(u, y_ref, aux, x_ref, u_ref))
        return blocks

    def decode(self, blocks: Sequence[np.ndarray]) -> Dict[str, list]:
        """Per-agent inputs, predicted states, cooperation outputs and references."""
        ev = self.evaluate(blocks)
        result = {"inputs": [], "states": [], "outputs": [], "aux": [], "ref_states": [], "ref_inputs": []}
        for i in range(self.m):
            layout = self.layouts[i]
            z = ev.blocks[i]
            result["inputs"].append(layout.inputs(z).copy())
            result["states"].append(ev.states(i).copy())
            result["outputs"].append(PeriodicTrajectory(layout.outputs(z).copy(), self.output_drifts[i]))
            result["aux"].append(layout.aux_values(z).copy())
            result["ref_states"].append(PeriodicTrajectory(layout.ref_states(z).copy(), self.state_drifts[i]))
            result["ref_inputs"].append(PeriodicTrajectory(layout.ref_inputs(z).copy()))
        return result


def _aux_start(box: Box) -> np.ndarray:
    lower = np.where(np.isfinite(box.lower), box.lower, 0.0)
    upper = np.where(np.isfinite(box.upper), box.upper, 0.0)
    both = np.isfinite(box.lower) & np.isfinite(box.upper)
    return np.where(both, 0.5 * (lower + upper), np.where(np.isfinite(box.lower), lower, np.where(np.isfinite(box.upper), upper, 0.0)))


def build_ocp(
    scenario: "Scenario",
    x: Sequence[np.ndarray],
    y_pr: Optional[Sequence[PeriodicTrajectory]],
    t: int,
    N: Optional[int] = None,
    T: Optional[int] = None,
) -> OcpProblem:
    """
    Transcribe the scenario's problem at state x and time t.

    Args:
        scenario: Runtime scenario
        x: Current state per agent
        y_pr: Previous cooperation outputs, None at t = 0 and after events
        t: Absolute time
        N: Horizon, the scenario's when omitted
        T: Period, the scenario's when omitted

    Returns:
        The problem instance
    """
    horizon = scenario.horizon if N is None else N
    period = scenario.period if T is None else T
    if period != scenario.objective.period:
        raise ConfigurationError(f"period {period} differs from the objective's period {scenario.objective.period}", "period")
    problem = OcpProblem(
        agents=scenario.agents,
        graph=scenario.graph,
        objective=scenario.objective,
        scaling=scenario.scaling,
        coupling=scenario.coupling,
        reference_coupling=scenario.reference_coupling,
        x0=x,
        y_pr=y_pr,
        horizon=horizon,
        period=period,
        time=t,
    )
    logger.debug(
        f"built problem at t={t}: N={horizon}, T={period}, variables={sum(problem.sizes)}, "
        f"rows={sum(g.size for g in problem.all_groups())}, change penalty {'on' if problem.change_active else 'off'}"
    )
    return problem
