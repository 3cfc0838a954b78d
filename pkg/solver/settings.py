"""
Solver settings for the SQP outer loop and the consensus ADMM inner solver.
"""
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class SqpSettings(BaseModel):
    """Outer SQP loop settings."""

    model_config = ConfigDict(extra="forbid")

    max_iterations: int = Field(default=50, ge=1, description="Maximum outer iterations")
    stationarity_tolerance: float = Field(default=1e-6, gt=0, description="Bound on the scaled step norm")
    feasibility_tolerance: float = Field(default=1e-6, gt=0, description="Bound on the constraint violation")
    armijo_factor: float = Field(default=0.5, gt=0, lt=1, description="Backtracking factor")
    armijo_slope: float = Field(default=1e-4, gt=0, lt=1, description="Sufficient decrease constant")
    min_step: float = Field(default=1e-8, gt=0, description="Smallest line-search step")
    merit_penalty: float = Field(default=10.0, gt=0, description="Initial l1 merit penalty")
    hessian_floor: float = Field(default=1e-8, gt=0, description="Diagonal shift of the scaled Hessian")
    trust_region: float = Field(default=0.1, gt=0, description="Step bound on scaled variables under nonconvex constraints")
    qp_solver: Literal["admm", "dense"] = Field(default="admm", description="Inner QP solver")
    soft_penalty: Optional[float] = Field(default=None, gt=0, description="l1 penalty of softened constraints")


class AdmmSettings(BaseModel):
    """Consensus ADMM settings."""

    model_config = ConfigDict(extra="forbid")

    rho: float = Field(default=1.0, gt=0, description="Initial penalty")
    sigma: float = Field(default=1e-9, gt=0, description="Proximal regularisation")
    primal_tolerance: float = Field(default=1e-8, gt=0)
    dual_tolerance: float = Field(default=1e-8, gt=0)
    relative_tolerance: float = Field(default=1e-8, ge=0)
    max_iterations: int = Field(default=4000, ge=1)
    relaxation: float = Field(default=1.6, ge=1, lt=2, description="Over-relaxation factor")
    equality_scale: float = Field(default=1e3, gt=0, description="Penalty multiplier on equality rows")
    adaptive_rho: bool = Field(default=True)
    adaptive_interval: int = Field(default=25, ge=1)
    warm_start_duals: bool = Field(default=True)
    workers: int = Field(default=1, ge=1, description="Threads for the agent-local solves")
