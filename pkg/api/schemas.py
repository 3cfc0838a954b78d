"""
Pydantic schemas for request/response validation.
"""
from pydantic import BaseModel, Field
from typing import Optional, List, Dict, Any
from datetime import datetime


class RunRequest(BaseModel):
    """Request schema for closed-loop runs and verifications."""
    scenario: str = Field(..., description="Built-in scenario name or path to a YAML config")
    steps: Optional[int] = Field(default=None, ge=0, description="Closed-loop steps")
    seed: Optional[int] = Field(default=None, description="Seed of the randomised checks")
    plots: bool = Field(default=False, description="Render plots next to the trace")
    soften: Optional[bool] = Field(default=None, description="Soften mid-run infeasible problems")
    sqp: Dict[str, Any] = Field(default_factory=dict, description="SQP setting overrides")
    admm: Dict[str, Any] = Field(default_factory=dict, description="ADMM setting overrides")


class SweepRequest(RunRequest):
    """Request schema for horizon sweeps."""
    horizons: List[int] = Field(..., min_length=1, description="Prediction horizons")
    k: int = Field(..., ge=1, description="Steps of accumulated cost")


class RunResponse(BaseModel):
    """Response schema for a stored run."""
    run_id: str
    command: str
    scenario: str
    steps: Optional[int] = None
    status: str
    exit_code: int
    output_dir: Optional[str] = None
    metrics: Dict[str, Any] = Field(default_factory=dict)
    error: Optional[str] = None
    created_at: Optional[datetime] = None


class CheckResponse(BaseModel):
    """One verification check."""
    name: str
    status: str
    detail: str = ""


class VerifyResponse(BaseModel):
    """Response schema for verifications."""
    run_id: str
    scenario: str
    passed: bool
    exit_code: int
    checks: List[CheckResponse]


class ScenarioListResponse(BaseModel):
    """Response schema for the built-in scenarios."""
    scenarios: List[str]
    count: int


class ScenarioResponse(BaseModel):
    """Exported configuration of one scenario."""
    name: str
    description: str = ""
    config: Dict[str, Any]
