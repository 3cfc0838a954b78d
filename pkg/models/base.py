"""
Agent model types: discrete dynamics, output maps, constraint sets and the
pairwise coupling constraints between neighbors.
"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import ConfigurationError, DimensionMismatchError
from core.graph import Graph
from models.integrators import DiscreteDynamics, forward_difference_jacobian

Jacobians = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class Box:
    """Componentwise bounds lower <= v <= upper; infinite entries are unbounded."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        if lower.shape != upper.shape:
            raise DimensionMismatchError(f"box bounds differ in shape: {lower.shape} vs {upper.shape}")
        if np.any(lower > upper):
            raise ConfigurationError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def symmetric(cls, bound: Sequence[float]) -> "Box":
        bound = np.asarray(bound, dtype=float)
        return cls(-bound, bound)

    @classmethod
    def unbounded(cls, dim: int) -> "Box":
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def pinned(self) -> np.ndarray:
        """Mask of components fixed to a single value."""
        return self.lower == self.upper

    @property
    def upper_rows(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.upper) & ~self.pinned)

    @property
    def lower_rows(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.lower) & ~self.pinned)

    def residual(self, v: np.ndarray) -> np.ndarray:
        """
        Stacked residuals [v - upper; lower - v] over finite bounds.

        Pinned components contribute both rows, so the residual stays an
        exact membership indicator.
        """
        v = np.asarray(v, dtype=float).ravel()
        if v.size != self.dim:
            raise DimensionMismatchError(f"vector of size {v.size} checked against box of size {self.dim}")
        upper = np.flatnonzero(np.isfinite(self.upper))
        lower = np.flatnonzero(np.isfinite(self.lower))
        return np.concatenate([v[upper] - self.upper[upper], self.lower[lower] - v[lower]])

    def contains(self, v: np.ndarray, tol: float = 0.0) -> bool:
        r = self.residual(v)
        return bool(r.size == 0 or r.max() <= tol)

    def shrink(self, fraction: float) -> "Box":
        """Shrink every finite two-sided bound by a fraction of its half-width."""
        lower, upper = self.lower.copy(), self.upper.copy()
        finite = np.isfinite(lower) & np.isfinite(upper)
        margin = fraction * 0.5 * (upper[finite] - lower[finite])
        lower[finite] += margin
        upper[finite] -= margin
        return Box(lower, upper)

    def is_compact(self, skip: Sequence[int] = ()) -> bool:
        keep = np.setdiff1d(np.arange(self.dim), np.asarray(skip, dtype=int))
        return bool(np.all(np.isfinite(self.lower[keep])) and np.all(np.isfinite(self.upper[keep])))

    def strictly_inside(self, outer: "Box", skip: Sequence[int] = ()) -> bool:
        """True if this box lies in the interior of ``outer`` on every bounded component."""
        keep = np.setdiff1d(np.arange(self.dim), np.asarray(skip, dtype=int))
        lo_ok = ~np.isfinite(outer.lower[keep]) | (self.lower[keep] > outer.lower[keep])
        hi_ok = ~np.isfinite(outer.upper[keep]) | (self.upper[keep] < outer.upper[keep])
        return bool(np.all(lo_ok) and np.all(hi_ok))

    def clip(self, v: np.ndarray) -> np.ndarray:
        return np.clip(v, self.lower, self.upper)


@dataclass(frozen=True)
class PathConstraint:
    """
    Nonlinear pointwise state constraint g(x) <= 0 local to one agent.

    Args:
        name: Label used in residual reports
        residual_fn: x -> residual rows
        jacobian_fn: x -> d residual / d x, forward differences when omitted
    """

    name: str
    residual_fn: Callable[[np.ndarray], np.ndarray]
    jacobian_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def residual(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.residual_fn(x), dtype=float))

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        if self.jacobian_fn is not None:
            return np.atleast_2d(np.asarray(self.jacobian_fn(x), dtype=float))
        return forward_difference_jacobian(self.residual, x)


@dataclass(frozen=True)
class AgentModel:
    """
    Discrete-time agent x+ = f(x, u), y = h(x, u) with constraint set Z.

    ``state_scale``/``input_scale`` give typical magnitudes of deviations and
    are used to scale decision variables in the solver. ``angle_states``
    lists unwrapped angle components that carry no box bound.
    """

    name: str
    n: int
    q: int
    p: int
    dynamics: DiscreteDynamics
    output_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    state_box: Box
    input_box: Box
    output_jacobian_fn: Optional[Callable[[np.ndarray, np.ndarray], Jacobians]] = None
    path_constraints: Tuple[PathConstraint, ...] = ()
    state_scale: Optional[np.ndarray] = None
    input_scale: Optional[np.ndarray] = None
    angle_states: Tuple[int, ...] = ()
    hold_fn: Optional[Callable[[np.ndarray, int], Tuple[np.ndarray, np.ndarray]]] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.state_box.dim != self.n or self.input_box.dim != self.q:
            raise DimensionMismatchError(f"model '{self.name}' boxes do not match n={self.n}, q={self.q}")
        scale_x = np.ones(self.n) if self.state_scale is None else np.asarray(self.state_scale, dtype=float)
        scale_u = np.ones(self.q) if self.input_scale is None else np.asarray(self.input_scale, dtype=float)
        object.__setattr__(self, "state_scale", scale_x)
        object.__setattr__(self, "input_scale", scale_u)

    @property
    def is_linear(self) -> bool:
        return self.dynamics.linear

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        x, u = self._check(x, u)
        return np.asarray(self.dynamics(x, u), dtype=float)

    def jacobians(self, x: np.ndarray, u: np.ndarray) -> Jacobians:
        """(df/dx, df/du) at (x, u)."""
        x, u = self._check(x, u)
        return self.dynamics.jacobians(x, u)

    def output(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        x, u = self._check(x, u)
        return np.atleast_1d(np.asarray(self.output_fn(x, u), dtype=float))

    def output_jacobians(self, x: np.ndarray, u: np.ndarray) -> Jacobians:
        x, u = self._check(x, u)
        if self.output_jacobian_fn is not None:
            return self.output_jacobian_fn(x, u)
        jx = forward_difference_jacobian(lambda z: self.output_fn(z, u), x)
        ju = forward_difference_jacobian(lambda v: self.output_fn(x, v), u)
        return jx, ju

    def hold_reference(self, x0: np.ndarray, period: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        A feasible periodic reference near x0, used to seed the first solve.

        Returns:
            (x_T, u_T) with shapes (period, n) and (period, q)
        """
        if self.hold_fn is None:
            raise ConfigurationError(f"model '{self.name}' has no hold reference")
        return self.hold_fn(np.asarray(x0, dtype=float), period)

    def path_residual(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Residual of (x, u) in Z: boxes first, then functional constraints."""
        x, u = self._check(x, u)
        parts = [self.state_box.residual(x), self.input_box.residual(u)]
        parts.extend(c.residual(x) for c in self.path_constraints)
        return np.concatenate(parts)

    def _check(self, x, u) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float).ravel()
        u = np.asarray(u, dtype=float).ravel()
        if x.size != self.n:
            raise DimensionMismatchError(f"model '{self.name}' expects a state of size {self.n}, got {x.size}")
        if u.size != self.q:
            raise DimensionMismatchError(f"model '{self.name}' expects an input of size {self.q}, got {u.size}")
        return x, u


def step(model: AgentModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Advance one agent by one sampling period."""
    return model.step(x, u)


@dataclass(frozen=True)
class CouplingConstraint:
    """
    Pairwise constraint g(a, b) <= 0 between an agent and one neighbor.

    The residual acts on the components ``selector`` of both states. The
    agent-level residual g_i(x_i, x_{N_i}) stacks the pairwise rows over N_i
    in ascending neighbor order. ``eta`` is the margin used when the
    constraint is imposed on references.
    """

    name: str
    selector: Tuple[int, ...]
    residual_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobian_fn: Callable[[np.ndarray, np.ndarray], Jacobians]
    eta: float = 0.05

    def pair_residual(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Residual on already selected components."""
        return np.atleast_1d(np.asarray(self.residual_fn(np.asarray(a, float), np.asarray(b, float)), dtype=float))

    def pair_jacobian(self, a: np.ndarray, b: np.ndarray) -> Jacobians:
        ja, jb = self.jacobian_fn(np.asarray(a, float), np.asarray(b, float))
        return np.atleast_2d(ja), np.atleast_2d(jb)

    def select(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float).ravel()[list(self.selector)]

    def residual(self, x_i: np.ndarray, x_neighbors: Sequence[np.ndarray]) -> np.ndarray:
        a = self.select(x_i)
        rows = [self.pair_residual(a, self.select(x_j)) for x_j in x_neighbors]
        return np.concatenate(rows) if rows else np.zeros(0)

    def tightened_residual(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.pair_residual(a, b) + self.eta


def min_distance(distance: float, selector: Sequence[int], eta: float = 0.05) -> CouplingConstraint:
    """
    Collision avoidance ||a - b|| >= distance on the selected components.

    Args:
        distance: Minimum separation
        selector: State indices holding the position
        eta: Margin for the reference version of the constraint

    Returns:
        Coupling constraint with residual distance - ||a - b||
    """
    if distance <= 0:
        raise ConfigurationError("minimum distance must be positive", "coupling.distance")

    def residual(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.array([distance - np.linalg.norm(a - b)])

    def jacobian(a: np.ndarray, b: np.ndarray) -> Jacobians:
        diff = a - b
        norm = np.linalg.norm(diff)
        if norm < 1e-12:
            direction = np.zeros_like(diff)
            direction[0] = 1.0
        else:
            direction = diff / norm
        return -direction.reshape(1, -1), direction.reshape(1, -1)

    return CouplingConstraint(
        name="min_distance",
        selector=tuple(int(s) for s in selector),
        residual_fn=residual,
        jacobian_fn=jacobian,
        eta=eta,
    )


@dataclass
class ResidualReport:
    """Constraint residuals of one agent at one time instant."""

    path: np.ndarray
    coupling: np.ndarray

    @property
    def worst(self) -> float:
        """Largest violation, zero when every constraint holds."""
        values = np.concatenate([self.path, self.coupling])
        return float(max(0.0, values.max())) if values.size else 0.0


def constraint_residuals(
    models: Sequence[AgentModel],
    coupling: Optional[CouplingConstraint],
    x_all: Sequence[np.ndarray],
    u_all: Sequence[np.ndarray],
    graph: Graph,
) -> List[ResidualReport]:
    """
    Evaluate Z_i and C_i residuals for every agent.

    Args:
        models: One model per agent
        coupling: Pairwise coupling constraint shared by all edges, or None
        x_all: States per agent
        u_all: Inputs per agent
        graph: Communication graph defining N_i

    Returns:
        One report per agent; residual <= 0 componentwise iff satisfied
    """
    if not (len(models) == len(x_all) == len(u_all) == graph.m):
        raise DimensionMismatchError("models, states, inputs and graph disagree on the agent count")
    reports = []
    for i, model in enumerate(models):
        path = model.path_residual(x_all[i], u_all[i])
        if coupling is None:
            rows = np.zeros(0)
        else:
            rows = coupling.residual(x_all[i], [x_all[j] for j in graph.neighbors(i)])
        reports.append(ResidualReport(path=path, coupling=rows))
    return reports
