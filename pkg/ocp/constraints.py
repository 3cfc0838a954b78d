"""
Constraint groups of the optimal control problem.

A group belongs to one agent (its owner) and may read decision variables of
the owner's neighbours. Residuals follow one convention: equality groups
are satisfied at r = 0, inequality groups at r <= 0. ``jacobian`` returns
one dense block per agent it reads, with respect to that agent's full
decision vector.
"""
from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence

import numpy as np

from core.errors import ConfigurationError, DimensionMismatchError
from core.graph import Graph
from core.trajectory import PeriodicTrajectory, check_common_period
from models.base import AgentModel, Box, CouplingConstraint

if TYPE_CHECKING:
    from ocp.problem import Evaluation, OcpProblem

FAMILIES = ("path", "terminal", "coupling", "reference", "admissible")


def _finite_rows(box: Box, include_pinned: bool = True):
    finite_up = np.isfinite(box.upper)
    finite_lo = np.isfinite(box.lower)
    if not include_pinned:
        finite_up &= ~box.pinned
        finite_lo &= ~box.pinned
    return np.flatnonzero(finite_up), np.flatnonzero(finite_lo)


def _box_residual(v: np.ndarray, box: Box, up: np.ndarray, lo: np.ndarray) -> np.ndarray:
    return np.concatenate([v[up] - box.upper[up], box.lower[lo] - v[lo]])


def _box_jacobian(dim: int, up: np.ndarray, lo: np.ndarray) -> np.ndarray:
    jac = np.zeros((up.size + lo.size, dim))
    jac[np.arange(up.size), up] = 1.0
    jac[up.size + np.arange(lo.size), lo] = -1.0
    return jac


class ConstraintGroup(ABC):
    """Residual rows of one constraint family owned by one agent."""

    name = "group"
    kind = "ineq"
    family = "path"

    def __init__(self, problem: "OcpProblem", owner: int):
        self.problem = problem
        self.owner = owner
        self.layout = problem.layouts[owner]
        self.agent = problem.agents[owner]
        self.model: AgentModel = self.agent.model

    @property
    def is_equality(self) -> bool:
        return self.kind == "eq"

    @property
    @abstractmethod
    def size(self) -> int:
        """Number of residual rows."""

    @abstractmethod
    def reads(self) -> Dict[int, np.ndarray]:
        """Indices of every agent's decision vector the group depends on."""

    @abstractmethod
    def residual(self, ev: "Evaluation") -> np.ndarray:
        """Residual rows at an evaluation point."""

    @abstractmethod
    def jacobian(self, ev: "Evaluation") -> Dict[int, np.ndarray]:
        """d residual / d z_j for every agent j the group reads."""

    def violation(self, residual: np.ndarray) -> np.ndarray:
        if self.is_equality:
            return np.abs(residual)
        return np.maximum(residual, 0.0)

    def _zero_jacobian(self, agent: Optional[int] = None) -> np.ndarray:
        agent = self.owner if agent is None else agent
        return np.zeros((self.size, self.problem.layouts[agent].size))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(owner={self.owner}, rows={self.size})"


# ----- path constraints Z_i -----

class InputBoxGroup(ConstraintGroup):
    name = "input_box"

    def __init__(self, problem, owner):
        super().__init__(problem, owner)
        self._up, self._lo = _finite_rows(self.model.input_box)
        self._per_step = self._up.size + self._lo.size

    @property
    def size(self) -> int:
        return self.layout.horizon * self._per_step

    def reads(self):
        return {self.owner: np.arange(self.layout.u.start, self.layout.u.stop)}

    def residual(self, ev):
        u = self.layout.inputs(ev.blocks[self.owner])
        box = self.model.input_box
        rows = [_box_residual(u[k], box, self._up, self._lo) for k in range(self.layout.horizon)]
        return np.concatenate(rows) if rows else np.zeros(0)

    def jacobian(self, ev):
        jac = self._zero_jacobian()
        block = _box_jacobian(self.model.q, self._up, self._lo)
        for k in range(self.layout.horizon):
            jac[k * self._per_step:(k + 1) * self._per_step, self.layout.u_index(k)] = block
        return {self.owner: jac}


class StatePathGroup(ConstraintGroup):
    """State box and functional path constraints on x(k), k = 1..N-1."""

    name = "state_path"

    def __init__(self, problem, owner):
        super().__init__(problem, owner)
        self._up, self._lo = _finite_rows(self.model.state_box)
        self._functional = sum(c.residual(np.zeros(self.model.n)).size for c in self.model.path_constraints)
        self._per_step = self._up.size + self._lo.size + self._functional
        self._steps = list(range(1, self.layout.horizon))

    @property
    def size(self) -> int:
        return len(self._steps) * self._per_step

    def reads(self):
        return {self.owner: np.arange(self.layout.u.start, self.layout.u.stop)}

    def _rows_at(self, x: np.ndarray) -> np.ndarray:
        parts = [_box_residual(x, self.model.state_box, self._up, self._lo)]
        parts.extend(c.residual(x) for c in self.model.path_constraints)
        return np.concatenate(parts)

    def residual(self, ev):
        states = ev.states(self.owner)
        rows = [self._rows_at(states[k]) for k in self._steps]
        return np.concatenate(rows) if rows else np.zeros(0)

    def jacobian(self, ev):
        states = ev.states(self.owner)
        sens = ev.sensitivity(self.owner)
        jac = self._zero_jacobian()
        box_jac = _box_jacobian(self.model.n, self._up, self._lo)
        for row, k in enumerate(self._steps):
            parts = [box_jac] + [c.jacobian(states[k]) for c in self.model.path_constraints]
            dx = np.vstack(parts)
            jac[row * self._per_step:(row + 1) * self._per_step, self.layout.u] = dx @ sens[k]
        return {self.owner: jac}


# ----- terminal constraint -----

class TerminalGroup(ConstraintGroup):
    """x(N) = x_T(N) in equality mode, (x(N) - x_T(N))^T P (x(N) - x_T(N)) <= alpha otherwise."""

    name = "terminal"
    family = "terminal"

    def __init__(self, problem, owner):
        super().__init__(problem, owner)
        self.terminal = self.agent.terminal
        self.kind = "eq" if self.terminal.is_equality else "ineq"
        self._tau = self.layout.horizon % self.layout.period

    @property
    def size(self) -> int:
        return self.model.n if self.terminal.is_equality else 1

    def reads(self):
        ref = self.layout.x_ref_index(self._tau)
        return {self.owner: np.concatenate([
            np.arange(self.layout.u.start, self.layout.u.stop), np.arange(ref.start, ref.stop),
        ])}

    def _error(self, ev) -> np.ndarray:
        n_steps = self.layout.horizon
        return ev.states(self.owner)[n_steps] - ev.ref_state(self.owner, n_steps)

    def residual(self, ev):
        e = self._error(ev)
        if self.terminal.is_equality:
            return e
        return np.array([float(e @ self.terminal.P @ e) - self.terminal.alpha])

    def jacobian(self, ev):
        sens = ev.sensitivity(self.owner)[self.layout.horizon]
        jac = self._zero_jacobian()
        ref = self.layout.x_ref_index(self._tau)
        if self.terminal.is_equality:
            jac[:, self.layout.u] = sens
            jac[:, ref] -= np.eye(self.model.n)
        else:
            grad = 2.0 * self.terminal.P @ self._error(ev)
            jac[0, self.layout.u] = grad @ sens
            jac[0, ref] -= grad
        return {self.owner: jac}


# ----- coupling constraints C_i on predicted states -----

class CouplingGroup(ConstraintGroup):
    """g(x_i(k), x_j(k)) <= 0 for every neighbour j and k = 1..N."""

    name = "coupling"
    family = "coupling"

    def __init__(self, problem, owner):
        super().__init__(problem, owner)
        self.coupling: CouplingConstraint = problem.coupling
        self.neighbors = problem.graph.neighbors(owner)
        sel = list(self.coupling.selector)
        zero = np.zeros(len(sel))
        self._pair_rows = self.coupling.pair_residual(zero, zero + 1.0).size
        self._steps = list(range(1, self.layout.horizon + 1))

    @property
    def size(self) -> int:
        return len(self.neighbors) * len(self._steps) * self._pair_rows

    def reads(self):
        reads = {}
        for j in (self.owner,) + tuple(self.neighbors):
            layout = self.problem.layouts[j]
            reads[j] = np.arange(layout.u.start, layout.u.stop)
        return reads

    def residual(self, ev):
        own = ev.states(self.owner)
        rows = []
        for j in self.neighbors:
            other = ev.states(j)
            for k in self._steps:
                rows.append(self.coupling.pair_residual(self.coupling.select(own[k]), self.coupling.select(other[k])))
        return np.concatenate(rows) if rows else np.zeros(0)

    def jacobian(self, ev):
        sel = list(self.coupling.selector)
        own = ev.states(self.owner)
        own_sens = ev.sensitivity(self.owner)
        jacs = {j: self._zero_jacobian(j) for j in (self.owner,) + tuple(self.neighbors)}
        row = 0
        for j in self.neighbors:
            other = ev.states(j)
            other_sens = ev.sensitivity(j)
            u_j = self.problem.layouts[j].u
            for k in self._steps:
                ja, jb = self.coupling.pair_jacobian(self.coupling.select(own[k]), self.coupling.select(other[k]))
                rows = slice(row, row + self._pair_rows)
                jacs[self.owner][rows, self.layout.u] += ja @ own_sens[k][sel]
                jacs[j][rows, u_j] += jb @ other_sens[k][sel]
                row += self._pair_rows
        return jacs


# ----- admissible periodic references -----

def reference_dynamics_residual(model: AgentModel, x_ref: np.ndarray, u_ref: np.ndarray, drift: np.ndarray) -> np.ndarray:
    """f(x_T(tau), u_T(tau)) - x_T(tau + 1) with the wraparound sample shifted by one period's drift."""
    period = x_ref.shape[0]
    rows = []
    for tau in range(period):
        nxt = x_ref[(tau + 1) % period] + (drift if tau == period - 1 else 0.0)
        rows.append(model.step(x_ref[tau], u_ref[tau]) - nxt)
    return np.concatenate(rows)


def output_consistency_residual(model: AgentModel, x_ref: np.ndarray, u_ref: np.ndarray, y_ref: np.ndarray) -> np.ndarray:
    return np.concatenate([y_ref[tau] - model.output(x_ref[tau], u_ref[tau]) for tau in range(x_ref.shape[0])])


class ReferenceDynamicsGroup(ConstraintGroup):
    name = "reference_dynamics"
    kind = "eq"
    family = "reference"

    @property
    def size(self) -> int:
        return self.layout.period * self.model.n

    def reads(self):
        return {self.owner: np.arange(self.layout.x_ref.start, self.layout.u_ref.stop)}

    def residual(self, ev):
        z = ev.blocks[self.owner]
        return reference_dynamics_residual(
            self.model, self.layout.ref_states(z), self.layout.ref_inputs(z), self.problem.state_drifts[self.owner]
        )

    def jacobian(self, ev):
        z = ev.blocks[self.owner]
        xs, us = self.layout.ref_states(z), self.layout.ref_inputs(z)
        n, period = self.model.n, self.layout.period
        jac = self._zero_jacobian()
        for tau in range(period):
            a, b = self.model.jacobians(xs[tau], us[tau])
            rows = slice(tau * n, (tau + 1) * n)
            jac[rows, self.layout.x_ref_index(tau)] += a
            jac[rows, self.layout.u_ref_index(tau)] += b
            jac[rows, self.layout.x_ref_index((tau + 1) % period)] -= np.eye(n)
        return {self.owner: jac}


class OutputConsistencyGroup(ConstraintGroup):
    name = "output_consistency"
    kind = "eq"
    family = "reference"

    @property
    def size(self) -> int:
        return self.layout.period * self.model.p

    def reads(self):
        return {self.owner: np.concatenate([
            np.arange(self.layout.y.start, self.layout.y.stop),
            np.arange(self.layout.x_ref.start, self.layout.u_ref.stop),
        ])}

    def residual(self, ev):
        z = ev.blocks[self.owner]
        return output_consistency_residual(
            self.model, self.layout.ref_states(z), self.layout.ref_inputs(z), self.layout.outputs(z)
        )

    def jacobian(self, ev):
        z = ev.blocks[self.owner]
        xs, us = self.layout.ref_states(z), self.layout.ref_inputs(z)
        p = self.model.p
        jac = self._zero_jacobian()
        for tau in range(self.layout.period):
            cx, du = self.model.output_jacobians(xs[tau], us[tau])
            rows = slice(tau * p, (tau + 1) * p)
            jac[rows, self.layout.y_index(tau)] = np.eye(p)
            jac[rows, self.layout.x_ref_index(tau)] = -cx
            jac[rows, self.layout.u_ref_index(tau)] = -du
        return {self.owner: jac}


class ReferenceBoxGroup(ConstraintGroup):
    """Tightened bounds on reference states and inputs (pinned components excluded)."""

    name = "reference_box"
    family = "admissible"

    def __init__(self, problem, owner):
        super().__init__(problem, owner)
        self._xb = self.agent.reference_state_box
        self._ub = self.agent.reference_input_box
        self._x_up, self._x_lo = _finite_rows(self._xb, include_pinned=False)
        self._u_up, self._u_lo = _finite_rows(self._ub, include_pinned=False)
        self._x_rows = self._x_up.size + self._x_lo.size
        self._u_rows = self._u_up.size + self._u_lo.size

    @property
    def size(self) -> int:
        return self.layout.period * (self._x_rows + self._u_rows)

    def reads(self):
        return {self.owner: np.arange(self.layout.x_ref.start, self.layout.u_ref.stop)}

    def residual(self, ev):
        z = ev.blocks[self.owner]
        xs, us = self.layout.ref_states(z), self.layout.ref_inputs(z)
        rows = []
        for tau in range(self.layout.period):
            rows.append(_box_residual(xs[tau], self._xb, self._x_up, self._x_lo))
            rows.append(_box_residual(us[tau], self._ub, self._u_up, self._u_lo))
        return np.concatenate(rows) if rows else np.zeros(0)

    def jacobian(self, ev):
        jac = self._zero_jacobian()
        jx = _box_jacobian(self.model.n, self._x_up, self._x_lo)
        ju = _box_jacobian(self.model.q, self._u_up, self._u_lo)
        row = 0
        for tau in range(self.layout.period):
            jac[row:row + self._x_rows, self.layout.x_ref_index(tau)] = jx
            row += self._x_rows
            jac[row:row + self._u_rows, self.layout.u_ref_index(tau)] = ju
            row += self._u_rows
        return {self.owner: jac}


class ReferencePinnedGroup(ConstraintGroup):
    """Reference components whose admissible interval is a single value."""

    name = "reference_pinned"
    kind = "eq"
    family = "admissible"

    def __init__(self, problem, owner):
        super().__init__(problem, owner)
        self._x_pins = np.flatnonzero(self.agent.reference_state_box.pinned)
        self._u_pins = np.flatnonzero(self.agent.reference_input_box.pinned)

    @property
    def size(self) -> int:
        return self.layout.period * (self._x_pins.size + self._u_pins.size)

    def reads(self):
        return {self.owner: np.arange(self.layout.x_ref.start, self.layout.u_ref.stop)}

    def residual(self, ev):
        z = ev.blocks[self.owner]
        xs, us = self.layout.ref_states(z), self.layout.ref_inputs(z)
        xv = self.agent.reference_state_box.lower[self._x_pins]
        uv = self.agent.reference_input_box.lower[self._u_pins]
        rows = []
        for tau in range(self.layout.period):
            rows.append(xs[tau][self._x_pins] - xv)
            rows.append(us[tau][self._u_pins] - uv)
        return np.concatenate(rows) if rows else np.zeros(0)

    def jacobian(self, ev):
        jac = self._zero_jacobian()
        row = 0
        for tau in range(self.layout.period):
            xs = self.layout.x_ref_index(tau)
            for c in self._x_pins:
                jac[row, xs.start + c] = 1.0
                row += 1
            us = self.layout.u_ref_index(tau)
            for c in self._u_pins:
                jac[row, us.start + c] = 1.0
                row += 1
        return {self.owner: jac}


class CooperationSetGroup(ConstraintGroup):
    """Membership of (y_T, aux) in the admissible cooperation set."""

    name = "cooperation_set"
    family = "admissible"

    def __init__(self, problem, owner):
        super().__init__(problem, owner)
        self.coop_set = problem.coop_sets[owner]
        self._jac = self._build_jacobian()

    def _build_jacobian(self) -> np.ndarray:
        cs = self.coop_set
        p, period = cs.output_dim, cs.period
        up, lo = _finite_rows(cs.output_box)
        block = _box_jacobian(p, up, lo)
        parts = []
        for tau in range(period):
            rows = np.zeros((block.shape[0], cs.size))
            rows[:, tau * p:(tau + 1) * p] = block
            parts.append(rows)
        if cs.polytope_a is not None:
            for tau in range(period):
                rows = np.zeros((cs.polytope_a.shape[0], cs.size))
                rows[:, tau * p:(tau + 1) * p] = cs.polytope_a
                parts.append(rows)
        if cs.aux_box is not None:
            aup, alo = _finite_rows(cs.aux_box)
            rows = np.zeros((aup.size + alo.size, cs.size))
            rows[:, period * p:] = _box_jacobian(cs.aux_dim, aup, alo)
            parts.append(rows)
        return np.vstack(parts) if parts else np.zeros((0, cs.size))

    @property
    def size(self) -> int:
        return self._jac.shape[0]

    def reads(self):
        return {self.owner: np.arange(self.layout.coop.start, self.layout.coop.stop)}

    def residual(self, ev):
        return self.coop_set.residual(ev.blocks[self.owner][self.layout.coop])

    def jacobian(self, ev):
        jac = self._zero_jacobian()
        jac[:, self.layout.coop] = self._jac
        return {self.owner: jac}


class ReferencePathGroup(ConstraintGroup):
    """Functional path constraints on reference states, tightened by a margin."""

    name = "reference_path"
    family = "admissible"

    def __init__(self, problem, owner):
        super().__init__(problem, owner)
        self.margin = self.agent.reference_path_margin
        self._per_step = sum(c.residual(np.zeros(self.model.n)).size for c in self.model.path_constraints)

    @property
    def size(self) -> int:
        return self.layout.period * self._per_step

    def reads(self):
        return {self.owner: np.arange(self.layout.x_ref.start, self.layout.x_ref.stop)}

    def residual(self, ev):
        xs = self.layout.ref_states(ev.blocks[self.owner])
        rows = [c.residual(x) + self.margin for x in xs for c in self.model.path_constraints]
        return np.concatenate(rows) if rows else np.zeros(0)

    def jacobian(self, ev):
        xs = self.layout.ref_states(ev.blocks[self.owner])
        jac = self._zero_jacobian()
        row = 0
        for tau, x in enumerate(xs):
            for c in self.model.path_constraints:
                block = c.jacobian(x)
                jac[row:row + block.shape[0], self.layout.x_ref_index(tau)] = block
                row += block.shape[0]
        return {self.owner: jac}


class ReferenceCouplingGroup(ConstraintGroup):
    """g(x_T,i(tau), x_T,j(tau)) + eta <= 0 for every neighbour j."""

    name = "reference_coupling"
    family = "admissible"

    def __init__(self, problem, owner):
        super().__init__(problem, owner)
        self.coupling: CouplingConstraint = problem.coupling
        self.neighbors = problem.graph.neighbors(owner)
        sel = np.zeros(len(self.coupling.selector))
        self._pair_rows = self.coupling.pair_residual(sel, sel + 1.0).size

    @property
    def size(self) -> int:
        return len(self.neighbors) * self.layout.period * self._pair_rows

    def _selected_indices(self, j: int) -> np.ndarray:
        layout = self.problem.layouts[j]
        return np.array([layout.x_ref_index(tau).start + c
                         for tau in range(layout.period) for c in self.coupling.selector], dtype=int)

    def reads(self):
        return {j: self._selected_indices(j) for j in (self.owner,) + tuple(self.neighbors)}

    def residual(self, ev):
        own = self.layout.ref_states(ev.blocks[self.owner])
        rows = []
        for j in self.neighbors:
            other = self.problem.layouts[j].ref_states(ev.blocks[j])
            for tau in range(self.layout.period):
                rows.append(self.coupling.tightened_residual(self.coupling.select(own[tau]), self.coupling.select(other[tau])))
        return np.concatenate(rows) if rows else np.zeros(0)

    def jacobian(self, ev):
        sel = list(self.coupling.selector)
        own = self.layout.ref_states(ev.blocks[self.owner])
        jacs = {j: self._zero_jacobian(j) for j in (self.owner,) + tuple(self.neighbors)}
        row = 0
        for j in self.neighbors:
            layout_j = self.problem.layouts[j]
            other = layout_j.ref_states(ev.blocks[j])
            for tau in range(self.layout.period):
                ja, jb = self.coupling.pair_jacobian(self.coupling.select(own[tau]), self.coupling.select(other[tau]))
                rows = slice(row, row + self._pair_rows)
                own_cols = self.layout.x_ref_index(tau).start + np.array(sel)
                other_cols = layout_j.x_ref_index(tau).start + np.array(sel)
                jacs[self.owner][rows, own_cols] += ja
                jacs[j][rows, other_cols] += jb
                row += self._pair_rows
        return jacs


def build_constraint_groups(problem: "OcpProblem") -> List[List[ConstraintGroup]]:
    """Constraint groups per agent, in a fixed order."""
    groups = []
    for i in range(problem.m):
        agent = problem.agents[i]
        own: List[ConstraintGroup] = [
            InputBoxGroup(problem, i),
            StatePathGroup(problem, i),
            TerminalGroup(problem, i),
            ReferenceDynamicsGroup(problem, i),
            OutputConsistencyGroup(problem, i),
            ReferenceBoxGroup(problem, i),
            ReferencePinnedGroup(problem, i),
            CooperationSetGroup(problem, i),
        ]
        if agent.model.path_constraints:
            own.append(ReferencePathGroup(problem, i))
        if problem.coupling is not None and problem.graph.neighbors(i):
            own.append(CouplingGroup(problem, i))
            if problem.reference_coupling:
                own.append(ReferenceCouplingGroup(problem, i))
        groups.append([g for g in own if g.size > 0])
    return groups


# ----- standalone residual evaluation -----

def reference_consistency_constraints(
    model: AgentModel,
    x_ref: PeriodicTrajectory,
    u_ref: PeriodicTrajectory,
    y_ref: PeriodicTrajectory,
    state_box: Optional[Box] = None,
    input_box: Optional[Box] = None,
) -> Dict[str, np.ndarray]:
    """
    Residuals that make (x_T, u_T, y_T) an admissible periodic reference.

    Args:
        model: Agent model
        x_ref: Reference states, with the per-period drift of unwrapped angles
        u_ref: Reference inputs
        y_ref: Cooperation output
        state_box: Admissible reference state bounds, the model's state box when omitted
        input_box: Admissible reference input bounds, the model's input box when omitted

    Returns:
        "dynamics" and "output" equality residuals and "admissible" inequality residuals
    """
    period = check_common_period([x_ref, u_ref, y_ref])
    if x_ref.dim != model.n or u_ref.dim != model.q or y_ref.dim != model.p:
        raise DimensionMismatchError(f"reference blocks do not match model '{model.name}'")
    state_box = model.state_box if state_box is None else state_box
    input_box = model.input_box if input_box is None else input_box
    xs, us, ys = x_ref.samples, u_ref.samples, y_ref.samples
    admissible = [np.concatenate([state_box.residual(xs[tau]), input_box.residual(us[tau])]) for tau in range(period)]
    return {
        "dynamics": reference_dynamics_residual(model, xs, us, x_ref.drift),
        "output": output_consistency_residual(model, xs, us, ys),
        "admissible": np.concatenate(admissible),
    }


def tightened_coupling_constraints(
    coupling: CouplingConstraint,
    references: Sequence[PeriodicTrajectory],
    graph: Graph,
    eta: Optional[float] = None,
) -> Dict[int, np.ndarray]:
    """
    g_i(x_T,i(tau), x_T,N_i(tau)) + eta per agent, stacked over neighbours and tau.

    Args:
        coupling: Pairwise coupling constraint
        references: Reference state trajectory per agent
        graph: Communication graph
        eta: Margin, the coupling's own margin when omitted

    Returns:
        Residual rows per agent; satisfied iff every row is <= 0
    """
    eta = coupling.eta if eta is None else eta
    if eta <= 0.0:
        raise ConfigurationError("coupling margin eta must be positive", "coupling.eta")
    if len(references) != graph.m:
        raise DimensionMismatchError(f"{len(references)} references for {graph.m} agents")
    period = check_common_period(references)
    result = {}
    for i in range(graph.m):
        rows = []
        for j in graph.neighbors(i):
            for tau in range(period):
                a = coupling.select(references[i].samples[tau])
                b = coupling.select(references[j].samples[tau])
                rows.append(coupling.pair_residual(a, b) + eta)
        result[i] = np.concatenate(rows) if rows else np.zeros(0)
    return result
