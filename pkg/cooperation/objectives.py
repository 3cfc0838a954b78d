"""
Cooperation objective functions.

Every objective is a sum of per-agent terms W_i(v_i, v_{N_i}) where v_j is
the flattened cooperation vector of agent j: its T output samples followed
by any auxiliary cooperation variables (radius and centre of a formation,
for example).
"""
import copy
import math
from abc import ABC, abstractmethod
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from core.errors import ConfigurationError, DimensionMismatchError
from core.graph import Graph
from core.trajectory import PeriodicTrajectory, check_common_period, shift_periodic

CoopVector = Dict[int, np.ndarray]


class CooperationObjective(ABC):
    """
    Graph-separable cooperation cost W = sum_i W_i.

    Args:
        graph: Communication graph; W_i may only read agent i and N_i
        period: Common period T of the cooperation outputs
        output_dims: Output dimension p_i per agent
        aux_dims: Number of auxiliary cooperation variables per agent
        lipschitz: Known Lipschitz constant of the gradient, if any
        minimum: Known minimum over the admissible set, if any
        time: Time index for objectives that depend on absolute time
    """

    name = "objective"
    convex = True
    time_varying = False
    shift_invariant = True

    def __init__(
        self,
        graph: Graph,
        period: int,
        output_dims: Sequence[int],
        aux_dims: Optional[Sequence[int]] = None,
        lipschitz: Optional[float] = None,
        minimum: Optional[float] = None,
        time: int = 0,
    ):
        if period < 1:
            raise ConfigurationError("period must be at least 1", "objective.period")
        if len(output_dims) != graph.m:
            raise DimensionMismatchError(f"{len(output_dims)} output dimensions for {graph.m} agents")
        self.graph = graph
        self.period = int(period)
        self.output_dims = tuple(int(p) for p in output_dims)
        self.aux_dims = tuple(int(a) for a in aux_dims) if aux_dims is not None else (0,) * graph.m
        self.lipschitz = lipschitz
        self.known_minimum = minimum
        self.time = int(time)

    @property
    def m(self) -> int:
        return self.graph.m

    def size(self, i: int) -> int:
        return self.period * self.output_dims[i] + self.aux_dims[i]

    def outputs(self, i: int, v: Mapping[int, np.ndarray]) -> np.ndarray:
        return np.asarray(v[i][: self.period * self.output_dims[i]]).reshape(self.period, self.output_dims[i])

    def aux(self, i: int, v: Mapping[int, np.ndarray]) -> np.ndarray:
        return np.asarray(v[i][self.period * self.output_dims[i]:])

    def scope(self, i: int) -> Tuple[int, ...]:
        return self.graph.scope(i)

    def at_time(self, t: int) -> "CooperationObjective":
        """Objective evaluated at absolute time t; stationary objectives ignore t."""
        if not self.time_varying or t == self.time:
            return self
        shifted = copy.copy(self)
        shifted.time = int(t)
        return shifted

    def parameters(self) -> dict:
        return {}

    @abstractmethod
    def term(self, i: int, v: Mapping[int, np.ndarray]) -> float:
        """W_i at the cooperation vectors v."""

    def term_gradient(self, i: int, v: Mapping[int, np.ndarray]) -> CoopVector:
        """Gradient of W_i with respect to every v_j, j in scope(i)."""
        grads = {}
        for j in self.scope(i):
            base = np.asarray(v[j], dtype=float)
            g = np.zeros(base.size)
            for k in range(base.size):
                h = 1e-6 * (1.0 + abs(base[k]))
                plus = dict(v)
                minus = dict(v)
                plus[j] = base.copy()
                plus[j][k] += h
                minus[j] = base.copy()
                minus[j][k] -= h
                g[k] = (self.term(i, plus) - self.term(i, minus)) / (2.0 * h)
            grads[j] = g
        return grads

    def term_hessian(self, i: int, v: Mapping[int, np.ndarray]) -> np.ndarray:
        """
        Hessian of W_i over the concatenation of v_j, j in scope(i).

        Central differences of the gradient; exact for quadratic terms up to
        rounding.
        """
        scope = self.scope(i)
        sizes = [self.size(j) for j in scope]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        hess = np.zeros((offsets[-1], offsets[-1]))
        for col_agent, j in enumerate(scope):
            base = np.asarray(v[j], dtype=float)
            for k in range(base.size):
                h = 1e-5 * (1.0 + abs(base[k]))
                plus = dict(v)
                minus = dict(v)
                plus[j] = base.copy()
                plus[j][k] += h
                minus[j] = base.copy()
                minus[j][k] -= h
                gp = self.term_gradient(i, plus)
                gm = self.term_gradient(i, minus)
                column = offsets[col_agent] + k
                for row_agent, l in enumerate(scope):
                    hess[offsets[row_agent]:offsets[row_agent + 1], column] = (gp[l] - gm[l]) / (2.0 * h)
        return 0.5 * (hess + hess.T)

    def evaluate(self, v: Mapping[int, np.ndarray]) -> float:
        """Total cost, summed in agent order."""
        self._check(v)
        return float(sum(self.term(i, v) for i in range(self.m)))

    def gradient(self, v: Mapping[int, np.ndarray]) -> CoopVector:
        self._check(v)
        total = {i: np.zeros(self.size(i)) for i in range(self.m)}
        for i in range(self.m):
            for j, g in self.term_gradient(i, v).items():
                total[j] += g
        return total

    def minimum(self) -> Optional[float]:
        """Closed-form minimum over the admissible cooperation set, if known."""
        return self.known_minimum

    def _check(self, v: Mapping[int, np.ndarray]):
        if len(v) != self.m:
            raise DimensionMismatchError(f"{len(v)} cooperation vectors for {self.m} agents")
        for i in range(self.m):
            if np.asarray(v[i]).size != self.size(i):
                raise DimensionMismatchError(
                    f"agent {i}: cooperation vector of size {np.asarray(v[i]).size}, expected {self.size(i)}"
                )

    def _scope_offsets(self, i: int) -> Dict[int, slice]:
        offsets = {}
        start = 0
        for j in self.scope(i):
            offsets[j] = slice(start, start + self.size(j))
            start += self.size(j)
        return offsets


class ConsensusObjective(CooperationObjective):
    """W_i = w * sum_{j in N_i} sum_tau ||y_i(tau) - y_j(tau)||^2."""

    name = "consensus"

    def __init__(self, graph: Graph, period: int, output_dim: int, weight: float = 1.0, **kwargs):
        kwargs.setdefault("minimum", 0.0)
        super().__init__(graph, period, [output_dim] * graph.m, **kwargs)
        self.weight = float(weight)

    def parameters(self) -> dict:
        return {"output_dim": self.output_dims[0], "weight": self.weight}

    def term(self, i, v):
        yi = self.outputs(i, v)
        return self.weight * sum(float(np.sum((yi - self.outputs(j, v)) ** 2)) for j in self.graph.neighbors(i))

    def term_gradient(self, i, v):
        grads = {j: np.zeros(self.size(j)) for j in self.scope(i)}
        yi = self.outputs(i, v)
        tp = yi.size
        for j in self.graph.neighbors(i):
            d = 2.0 * self.weight * (yi - self.outputs(j, v)).ravel()
            grads[i][:tp] += d
            grads[j][:tp] -= d
        return grads

    def term_hessian(self, i, v):
        slices = self._scope_offsets(i)
        size = sum(self.size(j) for j in self.scope(i))
        hess = np.zeros((size, size))
        tp = self.period * self.output_dims[i]
        block = 2.0 * self.weight * np.eye(tp)
        oi = slices[i].start
        for j in self.graph.neighbors(i):
            oj = slices[j].start
            hess[oi:oi + tp, oi:oi + tp] += block
            hess[oj:oj + tp, oj:oj + tp] += block
            hess[oi:oi + tp, oj:oj + tp] -= block
            hess[oj:oj + tp, oi:oi + tp] -= block
        return hess


class SatellitePhaseObjective(CooperationObjective):
    """
    W_i = 1/2 sum_tau sum_{j in N_i} |N_i| * d_ij(tau)^2 with
    d_ij = (y_hi - y_lo) - spacing, where hi/lo is the larger/smaller of i, j.
    """

    name = "satellite_phase"

    def __init__(self, graph: Graph, period: int, spacing_deg: float = 45.0, **kwargs):
        kwargs.setdefault("minimum", 0.0)
        super().__init__(graph, period, [1] * graph.m, **kwargs)
        self.spacing_deg = float(spacing_deg)
        self.spacing = math.radians(spacing_deg)

    def parameters(self) -> dict:
        return {"spacing_deg": self.spacing_deg}

    def _gaps(self, i, j, v) -> np.ndarray:
        lo, hi = min(i, j), max(i, j)
        return (self.outputs(hi, v) - self.outputs(lo, v)).ravel() - self.spacing

    def term(self, i, v):
        degree = self.graph.degree(i)
        return 0.5 * degree * sum(float(np.sum(self._gaps(i, j, v) ** 2)) for j in self.graph.neighbors(i))

    def term_gradient(self, i, v):
        grads = {j: np.zeros(self.size(j)) for j in self.scope(i)}
        degree = self.graph.degree(i)
        for j in self.graph.neighbors(i):
            coef = degree * self._gaps(i, j, v)
            grads[max(i, j)] += coef
            grads[min(i, j)] -= coef
        return grads

    def term_hessian(self, i, v):
        slices = self._scope_offsets(i)
        size = sum(self.size(j) for j in self.scope(i))
        hess = np.zeros((size, size))
        degree = self.graph.degree(i)
        eye = degree * np.eye(self.period)
        for j in self.graph.neighbors(i):
            hi, lo = slices[max(i, j)], slices[min(i, j)]
            hess[hi, hi] += eye
            hess[lo, lo] += eye
            hess[hi, lo] -= eye
            hess[lo, hi] -= eye
        return hess


def pseudo_huber(delta: float, a) -> np.ndarray:
    """
    Pseudo-Huber loss delta^2 * (sqrt(1 + a^2 / delta^2) - 1).

    Smooth and even, zero at 0 and asymptotically delta * |a|.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    a = np.asarray(a, dtype=float)
    return delta ** 2 * (np.sqrt(1.0 + (a / delta) ** 2) - 1.0)


class PseudoHuberTargetObjective(CooperationObjective):
    """W_i = w_i * sum_tau L_delta(||y_i(tau) - target_i||)."""

    name = "pseudo_huber_target"

    def __init__(
        self,
        graph: Graph,
        period: int,
        targets: Sequence[Sequence[float]],
        weights: Sequence[float],
        delta: float = 0.01,
        **kwargs,
    ):
        targets = [np.asarray(t, dtype=float) for t in targets]
        if len(targets) != graph.m or len(weights) != graph.m:
            raise ConfigurationError("one target and one weight per agent required", "objective.params")
        if delta <= 0:
            raise ConfigurationError("delta must be positive", "objective.params.delta")
        kwargs.setdefault("minimum", 0.0)
        kwargs.setdefault("lipschitz", float(max(weights)))
        super().__init__(graph, period, [t.size for t in targets], **kwargs)
        self.targets = targets
        self.weights = [float(w) for w in weights]
        self.delta = float(delta)

    def parameters(self) -> dict:
        return {
            "targets": [t.tolist() for t in self.targets],
            "weights": list(self.weights),
            "delta": self.delta,
        }

    def scope(self, i: int) -> Tuple[int, ...]:
        return (i,)

    def term(self, i, v):
        diff = self.outputs(i, v) - self.targets[i]
        return self.weights[i] * float(np.sum(pseudo_huber(self.delta, np.linalg.norm(diff, axis=1))))

    def term_gradient(self, i, v):
        diff = self.outputs(i, v) - self.targets[i]
        scale = 1.0 / np.sqrt(1.0 + np.sum(diff ** 2, axis=1) / self.delta ** 2)
        return {i: self.weights[i] * (diff * scale[:, None]).ravel()}

    def term_hessian(self, i, v):
        diff = self.outputs(i, v) - self.targets[i]
        p = diff.shape[1]
        blocks = []
        for d in diff:
            ratio = 1.0 + float(d @ d) / self.delta ** 2
            blocks.append(self.weights[i] * (np.eye(p) / math.sqrt(ratio) - np.outer(d, d) / (self.delta ** 2 * ratio ** 1.5)))
        hess = np.zeros((self.size(i), self.size(i)))
        for tau, block in enumerate(blocks):
            hess[tau * p:(tau + 1) * p, tau * p:(tau + 1) * p] = block
        return hess


class CircleFormationObjective(CooperationObjective):
    """
    Agents fly a common horizontal circle with fixed phase offsets.

    Each agent owns auxiliary variables [radius, centre_x, centre_y]. The
    term rewards large radii, penalises the distance of y_i(tau) to its slot
    on the circle at absolute time t + tau, and asks neighbours to agree on
    radius, centre and altitude.
    """

    name = "circle_formation"
    time_varying = True

    def __init__(
        self,
        graph: Graph,
        period: int,
        phase_step_deg: float = 45.0,
        radius_weight: float = 1.0,
        radius_offset: float = 0.0,
        **kwargs,
    ):
        super().__init__(graph, period, [3] * graph.m, aux_dims=[3] * graph.m, **kwargs)
        self.phase_step_deg = float(phase_step_deg)
        self.radius_weight = float(radius_weight)
        self.radius_offset = float(radius_offset)

    def parameters(self) -> dict:
        return {
            "phase_step_deg": self.phase_step_deg,
            "radius_weight": self.radius_weight,
            "radius_offset": self.radius_offset,
        }

    def _angles(self, i: int) -> np.ndarray:
        k = self.time + np.arange(self.period)
        return 2.0 * math.pi * (k % self.period) / self.period + math.radians(self.phase_step_deg) * i

    def _errors(self, i, v):
        y = self.outputs(i, v)
        radius, centre = self.aux(i, v)[0], self.aux(i, v)[1:3]
        phi = self._angles(i)
        e1 = y[:, 0] - radius * np.cos(phi) - centre[0]
        e2 = y[:, 1] - radius * np.sin(phi) - centre[1]
        return e1, e2, phi

    def term(self, i, v):
        e1, e2, _ = self._errors(i, v)
        y = self.outputs(i, v)
        aux = self.aux(i, v)
        cost = float(np.sum(e1 ** 2 + e2 ** 2)) / self.period
        cost += self.radius_weight * (self.radius_offset - aux[0])
        for j in self.graph.neighbors(i):
            aux_j = self.aux(j, v)
            cost += (aux[0] - aux_j[0]) ** 2 + float(np.sum((aux[1:3] - aux_j[1:3]) ** 2))
            cost += float(np.sum((y[:, 2] - self.outputs(j, v)[:, 2]) ** 2)) / (10.0 * self.period)
        return float(cost)

    def term_gradient(self, i, v):
        t_count = self.period
        grads = {j: np.zeros(self.size(j)) for j in self.scope(i)}
        e1, e2, phi = self._errors(i, v)
        y = self.outputs(i, v)
        aux = self.aux(i, v)
        gy = np.zeros((t_count, 3))
        gy[:, 0] = 2.0 * e1 / t_count
        gy[:, 1] = 2.0 * e2 / t_count
        g_aux = np.zeros(3)
        g_aux[0] = float(np.sum(-2.0 * (e1 * np.cos(phi) + e2 * np.sin(phi)))) / t_count - self.radius_weight
        g_aux[1] = -2.0 * float(np.sum(e1)) / t_count
        g_aux[2] = -2.0 * float(np.sum(e2)) / t_count
        for j in self.graph.neighbors(i):
            aux_j = self.aux(j, v)
            d_aux = 2.0 * (aux - aux_j)
            g_aux += d_aux
            grads[j][3 * t_count:] -= d_aux
            d_alt = 2.0 * (y[:, 2] - self.outputs(j, v)[:, 2]) / (10.0 * t_count)
            gy[:, 2] += d_alt
            gj = np.zeros((t_count, 3))
            gj[:, 2] = -d_alt
            grads[j][: 3 * t_count] += gj.ravel()
        grads[i][: 3 * t_count] += gy.ravel()
        grads[i][3 * t_count:] += g_aux
        return grads


class LeaderFollowObjective(CooperationObjective):
    """
    The leader tracks a moving point, followers track the leader.

    W_leader = sum_tau ||y_L(tau) - y_r(t + tau)||^2 and, for every follower,
    W_i = sum_tau ||y_i(tau) - y_L(tau)||^2_G. The reference moves along
    ``direction`` as (start + span * (k - start_time) / duration) * direction.

    No closed-form minimum is declared: a distance coupling between agents
    keeps followers away from the leader, so W0 is positive in general.
    """

    name = "leader_follow"
    time_varying = True
    shift_invariant = False

    def __init__(
        self,
        graph: Graph,
        period: int,
        output_dim: int = 3,
        leader: int = 0,
        gains: Sequence[float] = (1.0, 1.0, 0.1),
        direction: Sequence[float] = (1.0, 1.0, 0.0),
        start: float = -10.0,
        span: float = 20.0,
        start_time: int = 350,
        duration: int = 350,
        **kwargs,
    ):
        super().__init__(graph, period, [output_dim] * graph.m, **kwargs)
        for i in range(graph.m):
            if i != leader and leader not in graph.neighbors(i):
                raise ConfigurationError(f"follower {i} is not connected to leader {leader}", "objective.params.leader")
        self.leader = int(leader)
        self.gains = np.asarray(gains, dtype=float)
        self.direction = np.asarray(direction, dtype=float)
        self.start = float(start)
        self.span = float(span)
        self.start_time = int(start_time)
        self.duration = int(duration)

    def parameters(self) -> dict:
        return {
            "output_dim": self.output_dims[0],
            "leader": self.leader,
            "gains": self.gains.tolist(),
            "direction": self.direction.tolist(),
            "start": self.start,
            "span": self.span,
            "start_time": self.start_time,
            "duration": self.duration,
        }

    def reference(self, k: int) -> np.ndarray:
        return (self.start + self.span * (k - self.start_time) / self.duration) * self.direction

    def _references(self) -> np.ndarray:
        return np.array([self.reference(self.time + tau) for tau in range(self.period)])

    def term(self, i, v):
        if i == self.leader:
            return float(np.sum((self.outputs(i, v) - self._references()) ** 2))
        diff = self.outputs(i, v) - self.outputs(self.leader, v)
        return float(np.sum(diff ** 2 * self.gains))

    def term_gradient(self, i, v):
        grads = {j: np.zeros(self.size(j)) for j in self.scope(i)}
        if i == self.leader:
            grads[i] += 2.0 * (self.outputs(i, v) - self._references()).ravel()
            return grads
        d = (2.0 * (self.outputs(i, v) - self.outputs(self.leader, v)) * self.gains).ravel()
        grads[i] += d
        grads[self.leader] -= d
        return grads

    def term_hessian(self, i, v):
        slices = self._scope_offsets(i)
        size = sum(self.size(j) for j in self.scope(i))
        hess = np.zeros((size, size))
        if i == self.leader:
            hess[slices[i], slices[i]] = 2.0 * np.eye(self.size(i))
            return hess
        block = 2.0 * np.diag(np.tile(self.gains, self.period))
        si, sl = slices[i], slices[self.leader]
        hess[si, si] += block
        hess[sl, sl] += block
        hess[si, sl] -= block
        hess[sl, si] -= block
        return hess


OBJECTIVES = {
    ConsensusObjective.name: ConsensusObjective,
    SatellitePhaseObjective.name: SatellitePhaseObjective,
    PseudoHuberTargetObjective.name: PseudoHuberTargetObjective,
    CircleFormationObjective.name: CircleFormationObjective,
    LeaderFollowObjective.name: LeaderFollowObjective,
}


def build_objective(name: str, graph: Graph, period: int, **params) -> CooperationObjective:
    """Instantiate a built-in objective by name."""
    try:
        cls = OBJECTIVES[name]
    except KeyError:
        raise ConfigurationError(f"unknown objective '{name}', expected one of {sorted(OBJECTIVES)}", "objective.name")
    return cls(graph, period, **params)


# ----- conversion between trajectories and cooperation vectors -----

def pack(y_T: Sequence[PeriodicTrajectory], aux: Optional[Sequence[np.ndarray]] = None) -> CoopVector:
    """Flatten per-agent output trajectories (and auxiliaries) into cooperation vectors."""
    check_common_period(y_T)
    if aux is None:
        aux = [np.zeros(0)] * len(y_T)
    if len(aux) != len(y_T):
        raise DimensionMismatchError(f"{len(aux)} auxiliary vectors for {len(y_T)} agents")
    return {i: np.concatenate([traj.flat(), np.asarray(a, dtype=float).ravel()]) for i, (traj, a) in enumerate(zip(y_T, aux))}


def unpack(
    objective: CooperationObjective,
    v: Mapping[int, np.ndarray],
    like: Optional[Sequence[PeriodicTrajectory]] = None,
) -> Tuple[List[PeriodicTrajectory], List[np.ndarray]]:
    """Inverse of :func:`pack`; drifts are taken from ``like`` when given."""
    trajectories, aux = [], []
    for i in range(objective.m):
        drift = None if like is None else like[i].drift
        trajectories.append(PeriodicTrajectory(objective.outputs(i, v), drift))
        aux.append(objective.aux(i, v).copy())
    return trajectories, aux


def flatten(v: Mapping[int, np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(v[i], dtype=float).ravel() for i in sorted(v)])


def split(objective: CooperationObjective, flat: np.ndarray) -> CoopVector:
    result, start = {}, 0
    for i in range(objective.m):
        size = objective.size(i)
        result[i] = np.asarray(flat[start:start + size], dtype=float).copy()
        start += size
    return result


def eval_coop_cost(
    objective: CooperationObjective,
    y_T: Sequence[PeriodicTrajectory],
    aux: Optional[Sequence[np.ndarray]] = None,
) -> float:
    """W^c at per-agent cooperation outputs."""
    check_common_period(y_T, objective.period)
    return objective.evaluate(pack(y_T, aux))


def eval_coop_gradient(
    objective: CooperationObjective,
    y_T: Sequence[PeriodicTrajectory],
    aux: Optional[Sequence[np.ndarray]] = None,
) -> np.ndarray:
    """Gradient of W^c stacked in agent order."""
    check_common_period(y_T, objective.period)
    return flatten(objective.gradient(pack(y_T, aux)))


def assemble_hessian(objective: CooperationObjective, v: Mapping[int, np.ndarray]) -> np.ndarray:
    """Full Hessian of W^c over the stacked cooperation vector."""
    sizes = [objective.size(i) for i in range(objective.m)]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    hess = np.zeros((offsets[-1], offsets[-1]))
    for i in range(objective.m):
        scope = objective.scope(i)
        local = objective.term_hessian(i, v)
        index = np.concatenate([np.arange(offsets[j], offsets[j + 1]) for j in scope])
        hess[np.ix_(index, index)] += local
    return hess


def shift_invariance_gap(
    objective: CooperationObjective,
    rng: np.random.Generator,
    trials: int = 100,
    scale: float = 1.0,
) -> float:
    """
    Largest |W(shift(y, k), t + k) - W(y, t)| over random outputs and shifts.

    Time-invariant objectives ignore t, so the check reduces to
    W(shift(y, k)) = W(y).
    """
    worst = 0.0
    for _ in range(trials):
        y_T = [PeriodicTrajectory(scale * rng.standard_normal((objective.period, p))) for p in objective.output_dims]
        aux = [scale * rng.standard_normal(a) for a in objective.aux_dims]
        k = int(rng.integers(0, 2 * objective.period + 1))
        t = int(rng.integers(0, 1000))
        base = objective.at_time(t).evaluate(pack(y_T, aux))
        shifted = objective.at_time(t + k).evaluate(pack([shift_periodic(y, k) for y in y_T], aux))
        worst = max(worst, abs(shifted - base) / (1.0 + abs(base)))
    return worst
