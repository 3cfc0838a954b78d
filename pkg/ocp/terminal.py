"""
Terminal ingredients: terminal equality or an LQR-based quadratic terminal
cost, controller and sublevel set around the reference.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from core.errors import ConfigurationError, SynthesisError
from models.base import AgentModel
from ocp.costs import StageCost

logger = logging.getLogger(__name__)

TERMINAL_MODES = ("equality", "quadratic")
ALPHA_FLOOR = 1e-12


@dataclass(frozen=True)
class TerminalIngredients:
    """
    Terminal cost V_f, controller k_f and set X_f around the reference.

    In equality mode X_f is the reference point itself, V_f = 0 and k_f
    returns the reference input. In quadratic mode
    X_f = {x : (x - x_T)^T P (x - x_T) <= alpha}, V_f(x) = (x - x_T)^T P (x - x_T)
    and k_f(x) = u_T + K (x - x_T).
    """

    mode: str = "equality"
    P: Optional[np.ndarray] = None
    K: Optional[np.ndarray] = None
    alpha: float = 0.0
    sampled_points: int = 0

    def __post_init__(self):
        if self.mode not in TERMINAL_MODES:
            raise ConfigurationError(f"unknown terminal mode '{self.mode}'", "terminal.mode")
        if self.mode == "quadratic":
            if self.P is None or self.K is None or self.alpha <= 0.0:
                raise ConfigurationError("quadratic terminal ingredients need P, K and alpha > 0", "terminal")
            object.__setattr__(self, "P", np.asarray(self.P, dtype=float))
            object.__setattr__(self, "K", np.asarray(self.K, dtype=float))

    @classmethod
    def equality(cls) -> "TerminalIngredients":
        return cls(mode="equality")

    @property
    def is_equality(self) -> bool:
        return self.mode == "equality"

    def cost(self, x, x_ref) -> float:
        if self.is_equality:
            return 0.0
        e = np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float)
        return float(e @ self.P @ e)

    def level(self, x, x_ref) -> float:
        """Distance measure of x to X_f: the P-norm squared, or the max deviation in equality mode."""
        e = np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float)
        if self.is_equality:
            return float(np.max(np.abs(e))) if e.size else 0.0
        return float(e @ self.P @ e)

    def contains(self, x, x_ref, tol: float = 1e-6) -> bool:
        if self.is_equality:
            return self.level(x, x_ref) <= tol
        return self.level(x, x_ref) <= self.alpha * (1.0 + tol) + tol

    def control(self, x, x_ref, u_ref) -> np.ndarray:
        u_ref = np.asarray(u_ref, dtype=float)
        if self.is_equality:
            return u_ref.copy()
        return u_ref + self.K @ (np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float))


def riccati_residual(a: np.ndarray, b: np.ndarray, q: np.ndarray, r: np.ndarray, p: np.ndarray) -> float:
    s = r + b.T @ p @ b
    res = a.T @ p @ a - p - a.T @ p @ b @ np.linalg.solve(s, b.T @ p @ a) + q
    return float(np.max(np.abs(res)))


def _refine_riccati(a, b, q, r, p, iterations: int = 200) -> np.ndarray:
    for _ in range(iterations):
        s = r + b.T @ p @ b
        p_next = q + a.T @ p @ a - a.T @ p @ b @ np.linalg.solve(s, b.T @ p @ a)
        p_next = 0.5 * (p_next + p_next.T)
        if np.max(np.abs(p_next - p)) <= 1e-14 * max(1.0, np.max(np.abs(p))):
            return p_next
        p = p_next
    return p


def lqr_terminal_synthesis(
    model: AgentModel,
    x_ref: np.ndarray,
    u_ref: np.ndarray,
    cost: StageCost,
    state_margin: Optional[Sequence[float]] = None,
    input_margin: Optional[Sequence[float]] = None,
    coupling_selector: Sequence[int] = (),
    coupling_margin: Optional[float] = None,
    decrease_margin: float = 0.0,
    samples: int = 200,
    seed: int = 0,
    alpha0: float = 1.0,
    riccati_tolerance: float = 1e-9,
) -> TerminalIngredients:
    """
    Quadratic terminal ingredients from the LQR of the linearisation at an
    equilibrium reference.

    The level alpha is halved from ``alpha0`` until, on ``samples`` points of
    the boundary of X_f, the nonlinear decrease
    V_f(f(x, k_f(x))) - V_f(x) <= -l(x, k_f(x)) holds, every deviation stays
    within the state/input margins between path and reference bounds, and
    selected coupling components move by at most ``coupling_margin``.

    Args:
        model: Agent model
        x_ref: Equilibrium state
        u_ref: Equilibrium input
        cost: Stage cost (Q, R)
        state_margin: Allowed |x - x_T| per component, infinite when omitted
        input_margin: Allowed |k_f(x) - u_T| per component
        coupling_selector: State components entering the coupling constraint
        coupling_margin: Allowed deviation norm on the selected components
        decrease_margin: Relative slack; P solves the Riccati equation of (1 + margin) (Q, R)
        samples: Number of boundary samples
        seed: Sampling seed
        alpha0: Initial level
        riccati_tolerance: Bound on the Riccati residual

    Returns:
        Quadratic terminal ingredients
    """
    x_ref = np.asarray(x_ref, dtype=float)
    u_ref = np.asarray(u_ref, dtype=float)
    if np.max(np.abs(model.step(x_ref, u_ref) - x_ref)) > 1e-8 * (1.0 + np.max(np.abs(x_ref))):
        raise SynthesisError(f"reference of '{model.name}' is not an equilibrium")
    a, b = model.jacobians(x_ref, u_ref)
    q = (1.0 + decrease_margin) * cost.Q
    r = (1.0 + decrease_margin) * cost.R
    try:
        p = linalg.solve_discrete_are(a, b, q, r)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SynthesisError(f"Riccati equation of '{model.name}' has no stabilising solution: {exc}")
    p = 0.5 * (p + p.T)
    scale = max(1.0, float(np.max(np.abs(p))))
    if riccati_residual(a, b, q, r, p) > riccati_tolerance * scale:
        p = _refine_riccati(a, b, q, r, p)
    residual = riccati_residual(a, b, q, r, p)
    if residual > riccati_tolerance * scale:
        raise SynthesisError(f"Riccati residual {residual:.3g} above tolerance for '{model.name}'")

    k = -np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)
    radius = float(np.max(np.abs(np.linalg.eigvals(a + b @ k))))
    if radius >= 1.0:
        raise SynthesisError(f"LQR closed loop of '{model.name}' is not stable (spectral radius {radius:.4f})")

    state_margin = np.full(model.n, np.inf) if state_margin is None else np.asarray(state_margin, dtype=float)
    input_margin = np.full(model.q, np.inf) if input_margin is None else np.asarray(input_margin, dtype=float)
    selector = list(coupling_selector)

    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((samples, model.n))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    chol = np.linalg.cholesky(p)
    unit_points = linalg.solve_triangular(chol.T, directions.T, lower=False).T

    alpha = alpha0
    while alpha >= ALPHA_FLOOR:
        if _level_is_valid(model, cost, p, k, x_ref, u_ref, np.sqrt(alpha) * unit_points,
                           state_margin, input_margin, selector, coupling_margin):
            logger.info(f"terminal set of '{model.name}': alpha={alpha:.3g}, spectral radius {radius:.4f}")
            return TerminalIngredients(mode="quadratic", P=p, K=k, alpha=alpha, sampled_points=samples)
        alpha *= 0.5
    raise SynthesisError(f"terminal level of '{model.name}' fell below {ALPHA_FLOOR}")


def _level_is_valid(model, cost, p, k, x_ref, u_ref, deviations, state_margin, input_margin, selector, coupling_margin) -> bool:
    for e in deviations:
        du = k @ e
        if np.any(np.abs(e) > state_margin) or np.any(np.abs(du) > input_margin):
            return False
        if coupling_margin is not None and selector and np.linalg.norm(e[selector]) > coupling_margin:
            return False
        x = x_ref + e
        u = u_ref + du
        e_next = model.step(x, u) - x_ref
        value = float(e @ p @ e)
        change = float(e_next @ p @ e_next) - value + cost(x, u, x_ref, u_ref)
        if change > 1e-8 * (1.0 + value):
            return False
    return True
