"""
Scenario configuration schema and its YAML representation.

Numbers are SI units and angles radians. Box bounds use ``null`` for an
unbounded side so that configurations survive a YAML round trip.
"""
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.errors import ConfigurationError
from models.base import Box
from solver.settings import AdmmSettings, SqpSettings

logger = logging.getLogger(__name__)


class _Config(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BoxConfig(_Config):
    """Componentwise bounds; None is an unbounded side."""

    lower: List[Optional[float]]
    upper: List[Optional[float]]

    @model_validator(mode="after")
    def _same_length(self):
        if len(self.lower) != len(self.upper):
            raise ValueError(f"lower has {len(self.lower)} entries, upper has {len(self.upper)}")
        return self

    def to_box(self) -> Box:
        lower = [-np.inf if v is None else v for v in self.lower]
        upper = [np.inf if v is None else v for v in self.upper]
        return Box(lower, upper)

    @classmethod
    def from_box(cls, box: Box) -> "BoxConfig":
        return cls(
            lower=[None if not math.isfinite(v) else float(v) for v in box.lower],
            upper=[None if not math.isfinite(v) else float(v) for v in box.upper],
        )


class ModelConfig(_Config):
    kind: str = Field(..., description="Built-in model name")
    params: Dict[str, Any] = Field(default_factory=dict)


class StageCostConfig(_Config):
    """Diagonal weights of the quadratic stage cost."""

    q: List[float]
    r: List[float]


class AgentConfig(_Config):
    model: ModelConfig
    x0: List[float] = Field(..., description="Initial state")
    stage_cost: Optional[StageCostConfig] = Field(default=None, description="Overrides the scenario's stage cost")
    reference_state_box: Optional[BoxConfig] = None
    reference_input_box: Optional[BoxConfig] = None
    output_box: Optional[BoxConfig] = None
    aux_box: Optional[BoxConfig] = None
    state_drift: Optional[List[float]] = None
    reference_path_margin: float = Field(default=0.0, ge=0)


class GraphConfig(_Config):
    kind: Literal["path", "complete", "empty", "custom"] = "path"
    edges: List[List[int]] = Field(default_factory=list)


class ObjectiveConfig(_Config):
    name: str
    params: Dict[str, Any] = Field(default_factory=dict)


class ChangePenaltyConfig(_Config):
    """delta_i = scale / T unless explicit per-agent weights are given."""

    scale: float = Field(default=1e-4, gt=0)
    weights: Optional[List[float]] = None


class ScalingConfig(_Config):
    slope: float = Field(default=1.0, ge=1)
    offset: float = Field(default=1.0, ge=1)


class CouplingConfig(_Config):
    kind: Literal["min_distance"] = "min_distance"
    distance: float = Field(..., gt=0)
    selector: List[int]
    eta: float = Field(default=0.05, ge=0, description="Margin of the coupling imposed on references")


class TerminalConfig(_Config):
    mode: Literal["equality", "quadratic"] = "equality"
    decrease_margin: float = Field(default=0.0, ge=0)
    samples: int = Field(default=200, ge=1)
    alpha0: float = Field(default=1.0, gt=0)


class EventConfig(_Config):
    """
    A change applied at one closed-loop time step.

    ``agents`` are original agent ids (positions in the initial agent list).
    """

    time: int = Field(..., ge=0)
    kind: Literal["remove_agents", "switch_phase", "noop"]
    agents: List[int] = Field(default_factory=list)
    reconnect: Literal["keep", "path", "complete"] = "path"
    horizon: Optional[int] = Field(default=None, ge=0)
    period: Optional[int] = Field(default=None, ge=1)
    objective: Optional[ObjectiveConfig] = None


class ScenarioConfig(_Config):
    name: str
    description: str = ""
    agents: List[AgentConfig] = Field(..., min_length=1)
    graph: GraphConfig = Field(default_factory=GraphConfig)
    objective: ObjectiveConfig
    stage_cost: Optional[StageCostConfig] = None
    change_penalty: ChangePenaltyConfig = Field(default_factory=ChangePenaltyConfig)
    scaling: ScalingConfig = Field(default_factory=ScalingConfig)
    coupling: Optional[CouplingConfig] = None
    reference_coupling: bool = True
    terminal: TerminalConfig = Field(default_factory=TerminalConfig)
    horizon: int = Field(..., ge=0)
    period: int = Field(..., ge=1)
    reference_shrink: float = Field(default=0.02, ge=0, lt=1, description="Fraction of the path box half-width")
    events: List[EventConfig] = Field(default_factory=list)
    sqp: SqpSettings = Field(default_factory=SqpSettings)
    admm: AdmmSettings = Field(default_factory=AdmmSettings)
    w0: Optional[float] = Field(default=None, description="Known minimum of the cooperation objective")
    soften_on_infeasibility: bool = False
    steps: int = Field(default=100, ge=0, description="Default closed-loop length")
    notes: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_events(self):
        times = [e.time for e in self.events]
        if times != sorted(times):
            raise ValueError("events must be ordered by time")
        for event in self.events:
            bad = [a for a in event.agents if not 0 <= a < len(self.agents)]
            if bad:
                raise ValueError(f"event at t={event.time} names unknown agents {bad}")
        return self


def _format_validation_error(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(part) for part in err["loc"])
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(data: Dict[str, Any]) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]["loc"] if exc.errors() else ()
        raise ConfigurationError(f"invalid scenario: {_format_validation_error(exc)}", ".".join(str(p) for p in first))


def dump_config(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)


def save_config(config: ScenarioConfig, path: Union[str, Path]):
    Path(path).write_text(dump_config(config))
    logger.info(f"scenario '{config.name}' written to {path}")


def loads_config(text: str) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        raise ConfigurationError(f"scenario file is not valid YAML{where}: {exc}")
    if not isinstance(data, dict):
        raise ConfigurationError("scenario file must hold a mapping at the top level")
    return parse_config(data)


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"scenario file {path} does not exist", "scenario")
    return loads_config(path.read_text())
