"""
Models package initialization.
"""
from models.base import (
    AgentModel,
    Box,
    CouplingConstraint,
    PathConstraint,
    ResidualReport,
    constraint_residuals,
    min_distance,
    step,
)
from models.integrators import (
    DiscreteDynamics,
    euler_discretize,
    forward_difference_jacobian,
    linear_dynamics,
    rk4_discretize,
)
from models.library import (
    EARTH_MU,
    GRAVITY,
    build_model,
    circular_orbit_radius,
    corridor_walls,
    double_integrator,
    quadrotor,
    satellite,
)

__all__ = [
    "AgentModel",
    "Box",
    "CouplingConstraint",
    "PathConstraint",
    "ResidualReport",
    "constraint_residuals",
    "min_distance",
    "step",
    "DiscreteDynamics",
    "euler_discretize",
    "forward_difference_jacobian",
    "linear_dynamics",
    "rk4_discretize",
    "EARTH_MU",
    "GRAVITY",
    "build_model",
    "circular_orbit_radius",
    "corridor_walls",
    "double_integrator",
    "quadrotor",
    "satellite",
]
