"""
Discretization of continuous-time vector fields with sensitivities.
"""
from typing import Callable, Optional, Tuple

import numpy as np

VectorField = Callable[[np.ndarray, np.ndarray], np.ndarray]
FieldJacobian = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


def forward_difference_jacobian(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    """
    Forward-difference Jacobian with step 1e-6 * (1 + |x_j|) per column.
    """
    x = np.asarray(x, dtype=float).ravel()
    f0 = np.atleast_1d(np.asarray(fn(x), dtype=float))
    jac = np.zeros((f0.size, x.size))
    for j in range(x.size):
        h = 1e-6 * (1.0 + abs(x[j]))
        xp = x.copy()
        xp[j] += h
        jac[:, j] = (np.atleast_1d(np.asarray(fn(xp), dtype=float)) - f0) / h
    return jac


class DiscreteDynamics:
    """
    Discrete map x+ = F(x, u) with access to (dF/dx, dF/du).

    Args:
        step_fn: The map itself
        jacobian_fn: Analytic sensitivities; forward differences when omitted
        linear: The map is linear in (x, u)
    """

    def __init__(self, step_fn: VectorField, jacobian_fn: Optional[FieldJacobian] = None, linear: bool = False):
        self._step = step_fn
        self._jacobian = jacobian_fn
        self.linear = linear

    def __call__(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self._step(x, u)

    @property
    def has_analytic_jacobian(self) -> bool:
        return self._jacobian is not None

    def jacobians(self, x: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if self._jacobian is not None:
            return self._jacobian(x, u)
        a = forward_difference_jacobian(lambda z: self._step(z, u), x)
        b = forward_difference_jacobian(lambda v: self._step(x, v), u)
        return a, b


def linear_dynamics(a: np.ndarray, b: np.ndarray) -> DiscreteDynamics:
    """x+ = A x + B u."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return DiscreteDynamics(lambda x, u: a @ x + b @ u, lambda x, u: (a.copy(), b.copy()), linear=True)


def rk4_discretize(
    vector_field: VectorField,
    h: float,
    field_jacobian: Optional[FieldJacobian] = None,
) -> DiscreteDynamics:
    """
    Classical four-stage Runge-Kutta step with zero-order-hold input.

    Args:
        vector_field: (x, u) -> dx/dt
        h: Step size in seconds
        field_jacobian: (x, u) -> (df/dx, df/du); the discrete sensitivities
            are then propagated exactly through the stages

    Returns:
        Discrete dynamics
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")

    def step_fn(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        k1 = vector_field(x, u)
        k2 = vector_field(x + 0.5 * h * k1, u)
        k3 = vector_field(x + 0.5 * h * k2, u)
        k4 = vector_field(x + h * k3, u)
        return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    if field_jacobian is None:
        return DiscreteDynamics(step_fn)

    def jacobian_fn(x: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        eye = np.eye(x.size)
        k1 = vector_field(x, u)
        fx1, fu1 = field_jacobian(x, u)
        dk1_dx, dk1_du = fx1, fu1

        x2 = x + 0.5 * h * k1
        k2 = vector_field(x2, u)
        fx2, fu2 = field_jacobian(x2, u)
        dk2_dx = fx2 @ (eye + 0.5 * h * dk1_dx)
        dk2_du = fx2 @ (0.5 * h * dk1_du) + fu2

        x3 = x + 0.5 * h * k2
        fx3, fu3 = field_jacobian(x3, u)
        dk3_dx = fx3 @ (eye + 0.5 * h * dk2_dx)
        dk3_du = fx3 @ (0.5 * h * dk2_du) + fu3

        x4 = x + h * vector_field(x3, u)
        fx4, fu4 = field_jacobian(x4, u)
        dk4_dx = fx4 @ (eye + h * dk3_dx)
        dk4_du = fx4 @ (h * dk3_du) + fu4

        a = eye + (h / 6.0) * (dk1_dx + 2.0 * dk2_dx + 2.0 * dk3_dx + dk4_dx)
        b = (h / 6.0) * (dk1_du + 2.0 * dk2_du + 2.0 * dk3_du + dk4_du)
        return a, b

    return DiscreteDynamics(step_fn, jacobian_fn)


def euler_discretize(
    vector_field: VectorField,
    h: float,
    field_jacobian: Optional[FieldJacobian] = None,
) -> DiscreteDynamics:
    """Explicit Euler step x+ = x + h f(x, u)."""
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")

    def step_fn(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return x + h * vector_field(x, u)

    if field_jacobian is None:
        return DiscreteDynamics(step_fn)

    def jacobian_fn(x: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        fx, fu = field_jacobian(x, u)
        return np.eye(x.size) + h * fx, h * fu

    return DiscreteDynamics(step_fn, jacobian_fn)
