"""
Built-in agent models: planar double integrator, satellite in polar
coordinates and a linearised-attitude quadrotor.
"""
import math
from typing import Dict, Optional, Tuple

import numpy as np

from core.errors import ConfigurationError
from models.base import AgentModel, Box, PathConstraint
from models.integrators import euler_discretize, linear_dynamics, rk4_discretize

GRAVITY = 9.81
EARTH_MU = 3.986e14


# ----- double integrator -----

def double_integrator(
    dim: int = 1,
    h: float = 1.0,
    position_bound: float = 25.1,
    velocity_bound: float = 1.0,
    input_bound: float = 0.25,
    corridor: Optional[Dict[str, float]] = None,
) -> AgentModel:
    """
    Position-velocity integrator in ``dim`` axes with exact zero-order hold.

    State is [position (dim), velocity (dim)], input is acceleration and the
    output is the position. ``corridor`` holds keyword arguments of
    :func:`corridor_walls` for planar agents.
    """
    path_constraints = ()
    if corridor:
        if dim != 2:
            raise ConfigurationError("corridor walls need a planar integrator", "model.corridor")
        path_constraints = (corridor_walls(**corridor),)
    eye = np.eye(dim)
    zero = np.zeros((dim, dim))
    a = np.block([[eye, h * eye], [zero, eye]])
    b = np.vstack([0.5 * h * h * eye, h * eye])
    c = np.hstack([eye, zero])

    def hold(x0: np.ndarray, period: int) -> Tuple[np.ndarray, np.ndarray]:
        x_ref = np.concatenate([x0[:dim], np.zeros(dim)])
        return np.tile(x_ref, (period, 1)), np.zeros((period, dim))

    return AgentModel(
        name="double_integrator",
        n=2 * dim,
        q=dim,
        p=dim,
        dynamics=linear_dynamics(a, b),
        output_fn=lambda x, u: c @ x,
        output_jacobian_fn=lambda x, u: (c.copy(), np.zeros((dim, dim))),
        state_box=Box.symmetric([position_bound] * dim + [velocity_bound] * dim),
        input_box=Box.symmetric([input_bound] * dim),
        path_constraints=path_constraints,
        hold_fn=hold,
        params={
            "dim": dim,
            "h": h,
            "position_bound": position_bound,
            "velocity_bound": velocity_bound,
            "input_bound": input_bound,
            "corridor": dict(corridor) if corridor else None,
        },
    )


def corridor_walls(length: float, half_width: float, wall_height: float = 2.5, exponent: int = 8) -> PathConstraint:
    """
    Two blocks above and below a horizontal corridor centred at the origin.

    Each block is a superellipse |x/a|^e + |(y - c)/b|^e <= 1 with a = length/2,
    b = wall_height and c = +-(half_width + b); the position must stay outside
    both, which leaves the strip |y| < half_width open for |x| < length/2.

    The blocks stand in for rectangular walls on y over the corridor x-range
    with a differentiable residual. At the default height the open strip is
    less than 0.05 wider than half_width for |x| <= 3/8 length; the four
    corners are rounded off.
    """
    if exponent % 2 or exponent < 2:
        raise ConfigurationError("wall exponent must be an even integer >= 2", "walls.exponent")
    a = 0.5 * length
    b = wall_height
    centres = (half_width + b, -(half_width + b))

    def residual(x: np.ndarray) -> np.ndarray:
        px, py = x[0], x[1]
        return np.array([1.0 - ((px / a) ** exponent + ((py - c) / b) ** exponent) for c in centres])

    def jacobian(x: np.ndarray) -> np.ndarray:
        px, py = x[0], x[1]
        jac = np.zeros((2, x.size))
        for row, c in enumerate(centres):
            jac[row, 0] = -exponent * (px / a) ** (exponent - 1) / a
            jac[row, 1] = -exponent * ((py - c) / b) ** (exponent - 1) / b
        return jac

    return PathConstraint(name="corridor_walls", residual_fn=residual, jacobian_fn=jacobian)


# ----- satellite -----

def circular_orbit_radius(period_steps: int, h: float, mu: float = EARTH_MU) -> float:
    """Radius of the circular orbit with period ``period_steps * h`` seconds."""
    omega = 2.0 * math.pi / (period_steps * h)
    return (mu / omega ** 2) ** (1.0 / 3.0)


def satellite(
    h: float = 120.0,
    mass: float = 200.0,
    mu: float = EARTH_MU,
    thrust_limit: float = 0.237,
    radius_bounds: Tuple[float, float] = (6.5e6, 7.2e6),
    speed_bound: float = 50.0,
    omega_nominal: float = None,
    omega_band: float = 0.1,
) -> AgentModel:
    """
    Satellite in polar coordinates, state [r, theta, v, omega], input
    [F_r, F_theta], output theta; RK4 with step ``h``.
    """
    if omega_nominal is None:
        omega_nominal = math.sqrt(mu / circular_orbit_radius(47, h, mu) ** 3)

    def vector_field(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        r, _, v, w = x
        return np.array([
            v,
            w,
            r * w ** 2 - mu / r ** 2 + u[0] / mass,
            -2.0 * v * w / r + u[1] / (mass * r),
        ])

    def field_jacobian(x: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        r, _, v, w = x
        fx = np.array([
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [w ** 2 + 2.0 * mu / r ** 3, 0.0, 0.0, 2.0 * r * w],
            [2.0 * v * w / r ** 2 - u[1] / (mass * r ** 2), 0.0, -2.0 * w / r, -2.0 * v / r],
        ])
        fu = np.array([
            [0.0, 0.0],
            [0.0, 0.0],
            [1.0 / mass, 0.0],
            [0.0, 1.0 / (mass * r)],
        ])
        return fx, fu

    dynamics = rk4_discretize(vector_field, h, field_jacobian)
    c = np.array([[0.0, 1.0, 0.0, 0.0]])

    def hold(x0: np.ndarray, period: int) -> Tuple[np.ndarray, np.ndarray]:
        states = [x0]
        for _ in range(period - 1):
            states.append(dynamics(states[-1], np.zeros(2)))
        return np.array(states), np.zeros((period, 2))

    return AgentModel(
        name="satellite",
        n=4,
        q=2,
        p=1,
        dynamics=dynamics,
        output_fn=lambda x, u: x[1:2],
        output_jacobian_fn=lambda x, u: (c.copy(), np.zeros((1, 2))),
        state_box=Box(
            [radius_bounds[0], -np.inf, -speed_bound, (1.0 - omega_band) * omega_nominal],
            [radius_bounds[1], np.inf, speed_bound, (1.0 + omega_band) * omega_nominal],
        ),
        input_box=Box.symmetric([thrust_limit, thrust_limit]),
        state_scale=np.array([1e3, 0.1, 1.0, 1e-5]),
        input_scale=np.array([thrust_limit, thrust_limit]),
        angle_states=(1,),
        hold_fn=hold,
        params={"h": h, "mass": mass, "mu": mu, "thrust_limit": thrust_limit, "omega_nominal": omega_nominal},
    )


# ----- quadrotor -----

QUADROTOR_THRUST_GAIN = 0.91


def quadrotor_bounds() -> Dict[str, np.ndarray]:
    """Path bounds on state and input."""
    return {
        "state_lower": np.array([-21, -21, -21, -math.pi / 4, -math.pi / 4, -2, -2, -2, -3, -3], dtype=float),
        "state_upper": np.array([21, 21, 21, math.pi / 4, math.pi / 4, 2, 2, 2, 3, 3], dtype=float),
        "input_lower": np.array([-math.pi / 9, -math.pi / 9, 0.0]),
        "input_upper": np.array([math.pi / 9, math.pi / 9, 2 * GRAVITY]),
    }


def quadrotor(h: float = 0.1) -> AgentModel:
    """
    Quadrotor with state [position (3), pitch, roll, velocity (3), pitch
    rate, roll rate] and input [pitch command, roll command, thrust];
    explicit Euler with step ``h``. The output is the position.
    """

    def vector_field(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        pitch, roll = x[3], x[4]
        return np.array([
            x[5],
            x[6],
            x[7],
            -8.0 * pitch + x[8],
            -8.0 * roll + x[9],
            GRAVITY * math.tan(pitch),
            GRAVITY * math.tan(roll),
            -GRAVITY + QUADROTOR_THRUST_GAIN * u[2],
            -10.0 * pitch + 10.0 * u[0],
            -10.0 * roll + 10.0 * u[1],
        ])

    def field_jacobian(x: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        fx = np.zeros((10, 10))
        fx[0, 5] = fx[1, 6] = fx[2, 7] = 1.0
        fx[3, 3] = fx[4, 4] = -8.0
        fx[3, 8] = fx[4, 9] = 1.0
        fx[5, 3] = GRAVITY / math.cos(x[3]) ** 2
        fx[6, 4] = GRAVITY / math.cos(x[4]) ** 2
        fx[8, 3] = fx[9, 4] = -10.0
        fu = np.zeros((10, 3))
        fu[8, 0] = fu[9, 1] = 10.0
        fu[7, 2] = QUADROTOR_THRUST_GAIN
        return fx, fu

    c = np.hstack([np.eye(3), np.zeros((3, 7))])
    hover = np.array([0.0, 0.0, GRAVITY / QUADROTOR_THRUST_GAIN])
    bounds = quadrotor_bounds()

    def hold(x0: np.ndarray, period: int) -> Tuple[np.ndarray, np.ndarray]:
        x_ref = np.zeros(10)
        x_ref[:3] = x0[:3]
        return np.tile(x_ref, (period, 1)), np.tile(hover, (period, 1))

    return AgentModel(
        name="quadrotor",
        n=10,
        q=3,
        p=3,
        dynamics=euler_discretize(vector_field, h, field_jacobian),
        output_fn=lambda x, u: x[:3],
        output_jacobian_fn=lambda x, u: (c.copy(), np.zeros((3, 3))),
        state_box=Box(bounds["state_lower"], bounds["state_upper"]),
        input_box=Box(bounds["input_lower"], bounds["input_upper"]),
        state_scale=np.array([1.0, 1.0, 1.0, 0.1, 0.1, 1.0, 1.0, 1.0, 0.5, 0.5]),
        input_scale=np.array([0.1, 0.1, 1.0]),
        hold_fn=hold,
        params={"h": h, "hover_thrust": float(hover[2])},
    )


MODEL_BUILDERS = {
    "double_integrator": double_integrator,
    "satellite": satellite,
    "quadrotor": quadrotor,
}


def build_model(kind: str, **params) -> AgentModel:
    """Instantiate a built-in model by name."""
    try:
        builder = MODEL_BUILDERS[kind]
    except KeyError:
        raise ConfigurationError(
            f"unknown model '{kind}', expected one of {sorted(MODEL_BUILDERS)}", "model.kind"
        )
    return builder(**params)
