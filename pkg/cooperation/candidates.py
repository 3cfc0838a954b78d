"""
Projected-gradient improvement of cooperation outputs and estimation of the
best achievable cooperation cost W0.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from cooperation.objectives import CooperationObjective, CoopVector, flatten, pack, split, unpack
from core.errors import DimensionMismatchError, ProjectionError
from core.trajectory import PeriodicTrajectory
from models.base import Box

logger = logging.getLogger(__name__)

ARMIJO_FACTOR = 0.5
ARMIJO_SLOPE = 1e-4


@dataclass(frozen=True)
class CooperationSet:
    """
    Convex admissible set of one agent's cooperation vector.

    Every output sample lies in ``output_box`` and, optionally, in the
    polytope {y : A y <= b}; auxiliary variables lie in ``aux_box``.
    """

    period: int
    output_box: Box
    aux_box: Optional[Box] = None
    polytope_a: Optional[np.ndarray] = None
    polytope_b: Optional[np.ndarray] = None

    @property
    def output_dim(self) -> int:
        return self.output_box.dim

    @property
    def aux_dim(self) -> int:
        return 0 if self.aux_box is None else self.aux_box.dim

    @property
    def size(self) -> int:
        return self.period * self.output_dim + self.aux_dim

    @property
    def is_box(self) -> bool:
        return self.polytope_a is None

    def _split(self, v: np.ndarray):
        v = np.asarray(v, dtype=float).ravel()
        if v.size != self.size:
            raise DimensionMismatchError(f"cooperation vector of size {v.size}, set expects {self.size}")
        cut = self.period * self.output_dim
        return v[:cut].reshape(self.period, self.output_dim), v[cut:]

    def residual(self, v: np.ndarray) -> np.ndarray:
        y, aux = self._split(v)
        parts = [self.output_box.residual(sample) for sample in y]
        if self.polytope_a is not None:
            parts.extend(self.polytope_a @ sample - self.polytope_b for sample in y)
        if self.aux_box is not None:
            parts.append(self.aux_box.residual(aux))
        return np.concatenate(parts) if parts else np.zeros(0)

    def contains(self, v: np.ndarray, tol: float = 1e-9) -> bool:
        r = self.residual(v)
        return bool(r.size == 0 or r.max() <= tol)

    def project(self, v: np.ndarray) -> np.ndarray:
        """Euclidean projection of v onto the set."""
        y, aux = self._split(v)
        lower = np.concatenate([np.tile(self.output_box.lower, self.period)]
                               + ([self.aux_box.lower] if self.aux_box is not None else []))
        upper = np.concatenate([np.tile(self.output_box.upper, self.period)]
                               + ([self.aux_box.upper] if self.aux_box is not None else []))
        point = np.concatenate([y.ravel(), aux])
        if self.is_box:
            return np.clip(point, lower, upper)
        return self._project_polytope(point, lower, upper)

    def _project_polytope(self, point: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
        from solver.admm import solve_qp_admm
        from solver.settings import AdmmSettings

        size = point.size
        rows = self.polytope_a.shape[0]
        poly = np.zeros((rows * self.period, size))
        for tau in range(self.period):
            poly[tau * rows:(tau + 1) * rows, tau * self.output_dim:(tau + 1) * self.output_dim] = self.polytope_a
        constraint = np.vstack([np.eye(size), poly])
        lo = np.concatenate([lower, np.full(rows * self.period, -np.inf)])
        hi = np.concatenate([upper, np.tile(self.polytope_b, self.period)])
        result = solve_qp_admm(
            np.eye(size), -point, constraint, lo, hi,
            AdmmSettings(primal_tolerance=1e-11, dual_tolerance=1e-11, max_iterations=20000),
        )
        if not result.converged:
            raise ProjectionError(f"projection onto the cooperation set did not converge ({result.iterations} iterations)")
        return result.x


def project(sets: Sequence[CooperationSet], v: CoopVector) -> CoopVector:
    if len(sets) != len(v):
        raise DimensionMismatchError(f"{len(sets)} cooperation sets for {len(v)} agents")
    return {i: sets[i].project(v[i]) for i in range(len(sets))}


@dataclass
class CandidateStep:
    """Result of one projected-gradient improvement step."""

    y: List[PeriodicTrajectory]
    aux: List[np.ndarray]
    projection: CoopVector
    step_size: float
    theta: float
    decrease: float
    guaranteed_decrease: Optional[float] = None


def estimate_lipschitz(
    objective: CooperationObjective,
    v: CoopVector,
    iterations: int = 100,
    seed: int = 0,
) -> float:
    """
    Largest Hessian eigenvalue magnitude at v by power iteration, using
    central differences of the gradient as Hessian-vector products.
    """
    rng = np.random.default_rng(seed)
    base = flatten(v)
    x = rng.standard_normal(base.size)
    x /= np.linalg.norm(x)
    eps = 1e-4 * (1.0 + np.linalg.norm(base))
    estimate = 0.0
    for _ in range(iterations):
        g_plus = flatten(objective.gradient(split(objective, base + eps * x)))
        g_minus = flatten(objective.gradient(split(objective, base - eps * x)))
        hx = (g_plus - g_minus) / (2.0 * eps)
        norm = np.linalg.norm(hx)
        if norm == 0.0:
            return 0.0
        estimate = norm
        x = hx / norm
    return float(estimate)


def _projected_point(objective, sets, v: CoopVector, step: float) -> CoopVector:
    grad = objective.gradient(v)
    return project(sets, {i: v[i] - step * grad[i] for i in v})


def _squared_distance(a: CoopVector, b: CoopVector) -> float:
    return float(sum(np.sum((a[i] - b[i]) ** 2) for i in a))


def projected_gradient_candidate(
    objective: CooperationObjective,
    sets: Sequence[CooperationSet],
    y_T: Sequence[PeriodicTrajectory],
    theta: float,
    aux: Optional[Sequence[np.ndarray]] = None,
    lipschitz: Optional[float] = None,
) -> CandidateStep:
    """
    Move the cooperation outputs towards a projected-gradient point.

    For convex objectives the step size is s = 2 / (L theta + 2) and the
    returned outputs y + theta (p(y) - y) satisfy
    W(y_hat) - W(y) <= -theta ||p(y) - y||^2. Non-convex objectives fall back
    to Armijo backtracking on the projected-gradient step.

    Args:
        objective: Cooperation objective
        sets: Admissible cooperation set per agent
        y_T: Current cooperation outputs
        theta: Interpolation weight in [0, 1]
        aux: Auxiliary cooperation variables per agent
        lipschitz: Gradient Lipschitz constant; estimated when omitted

    Returns:
        Candidate outputs with the attained and guaranteed decrease
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    v = pack(y_T, aux)
    w_start = objective.evaluate(v)

    if objective.convex:
        if lipschitz is None:
            lipschitz = objective.lipschitz if objective.lipschitz is not None else estimate_lipschitz(objective, v)
        step = 2.0 / (lipschitz * theta + 2.0)
        target = _projected_point(objective, sets, v, step)
        guaranteed = -theta * _squared_distance(target, v)
    else:
        step = 1.0 / max(lipschitz or objective.lipschitz or 1.0, 1e-12)
        for _ in range(60):
            target = _projected_point(objective, sets, v, step)
            if objective.evaluate(target) <= w_start - ARMIJO_SLOPE / step * _squared_distance(target, v):
                break
            step *= ARMIJO_FACTOR
        guaranteed = None

    candidate = {i: v[i] + theta * (target[i] - v[i]) for i in v}
    y_hat, aux_hat = unpack(objective, candidate, like=y_T)
    return CandidateStep(
        y=y_hat,
        aux=aux_hat,
        projection=target,
        step_size=step,
        theta=theta,
        decrease=objective.evaluate(candidate) - w_start,
        guaranteed_decrease=guaranteed,
    )


@dataclass
class W0Estimate:
    """
    Estimated minimum of W over the admissible cooperation set.

    ``lower_bound`` marks estimates over a relaxation of the set; the true
    minimum is then at least ``value``.
    """

    value: float
    approximate: bool
    iterations: int = 0
    point: Optional[CoopVector] = field(default=None, repr=False)
    lower_bound: bool = False


def estimate_W0(
    objective: CooperationObjective,
    sets: Sequence[CooperationSet],
    start: Optional[CoopVector] = None,
    max_iterations: int = 5000,
    tolerance: float = 1e-10,
    relaxed: bool = False,
) -> W0Estimate:
    """
    Best achievable cooperation cost.

    Uses the objective's closed-form minimum when available, otherwise
    accelerated projected gradient for convex objectives and plain projected
    gradient with backtracking for the rest (flagged approximate).

    Args:
        relaxed: The per-agent sets omit constraints between agents (the
            tightened coupling on references). The result is then only a
            lower bound on W0 and is flagged approximate.
    """
    known = objective.minimum()
    if known is not None:
        return W0Estimate(value=float(known), approximate=relaxed, lower_bound=relaxed)
    estimate = _estimate_W0(objective, sets, start, max_iterations, tolerance)
    if relaxed:
        estimate.approximate = True
        estimate.lower_bound = True
    return estimate


def _estimate_W0(
    objective: CooperationObjective,
    sets: Sequence[CooperationSet],
    start: Optional[CoopVector],
    max_iterations: int,
    tolerance: float,
) -> W0Estimate:
    if start is None:
        start = {i: np.zeros(objective.size(i)) for i in range(objective.m)}
    v = project(sets, start)
    lipschitz = objective.lipschitz or estimate_lipschitz(objective, v)
    step = 1.0 / max(lipschitz, 1e-12)

    if not objective.convex:
        value = objective.evaluate(v)
        for iteration in range(1, max_iterations + 1):
            trial_step = step
            while True:
                target = _projected_point(objective, sets, v, trial_step)
                trial = objective.evaluate(target)
                if trial <= value - ARMIJO_SLOPE / trial_step * _squared_distance(target, v) or trial_step < 1e-12:
                    break
                trial_step *= ARMIJO_FACTOR
            moved = np.sqrt(_squared_distance(target, v))
            v, value = target, trial
            if moved <= tolerance * (1.0 + np.linalg.norm(flatten(v))):
                break
        logger.warning(f"W0 of non-convex objective '{objective.name}' estimated locally: {value:.6g}")
        return W0Estimate(value=value, approximate=True, iterations=iteration, point=v)

    momentum_point = dict(v)
    t_k = 1.0
    converged = False
    for iteration in range(1, max_iterations + 1):
        target = _projected_point(objective, sets, momentum_point, step)
        residual = np.sqrt(_squared_distance(target, momentum_point))
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k ** 2))
        if objective.evaluate(target) > objective.evaluate(v):
            momentum_point, t_k = dict(v), 1.0
            continue
        momentum_point = {i: target[i] + (t_k - 1.0) / t_next * (target[i] - v[i]) for i in v}
        v, t_k = target, t_next
        if residual <= tolerance * (1.0 + np.linalg.norm(flatten(v))):
            converged = True
            break
    if not converged:
        logger.warning(f"W0 estimate for '{objective.name}' stopped after {max_iterations} iterations")
    return W0Estimate(value=objective.evaluate(v), approximate=not converged, iterations=iteration, point=v)
