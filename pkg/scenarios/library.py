"""
Built-in scenarios: satellite constellation, narrow path crossing,
quadrotor formation with a task switch, and a small convex baseline whose
problems are plain QPs.
"""
import difflib
import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Union

import numpy as np

from core.errors import ConfigurationError
from models.library import EARTH_MU, circular_orbit_radius
from scenarios.builder import Scenario, build_scenario
from scenarios.config import (
    AgentConfig,
    BoxConfig,
    ChangePenaltyConfig,
    CouplingConfig,
    EventConfig,
    GraphConfig,
    ModelConfig,
    ObjectiveConfig,
    ScenarioConfig,
    StageCostConfig,
    TerminalConfig,
    load_config,
)

logger = logging.getLogger(__name__)

SATELLITE_PERIOD = 47
SATELLITE_STEP = 120.0

QUADROTOR_START = [(-1.0, -1.0, 0.0), (1.0, -1.0, 0.0), (1.0, 1.0, 0.0), (-1.0, 1.0, 0.0)]


def satellite_config() -> ScenarioConfig:
    radius = circular_orbit_radius(SATELLITE_PERIOD, SATELLITE_STEP, EARTH_MU)
    omega = math.sqrt(EARTH_MU / radius ** 3)
    pinned = BoxConfig(lower=[radius, None, 0.0, omega], upper=[radius, None, 0.0, omega])
    agents = [
        AgentConfig(
            model=ModelConfig(kind="satellite", params={"h": SATELLITE_STEP, "omega_nominal": omega}),
            x0=[radius, math.radians(25.0 * (i + 1)), 0.0, omega],
            reference_state_box=pinned,
            reference_input_box=BoxConfig(lower=[0.0, 0.0], upper=[0.0, 0.0]),
            state_drift=[0.0, 2.0 * math.pi, 0.0, 0.0],
        )
        for i in range(5)
    ]
    return ScenarioConfig(
        name="satellite",
        description="Five satellites spread to 45 degree spacing on a shared orbit; two deorbit at t=750.",
        agents=agents,
        graph=GraphConfig(kind="path"),
        objective=ObjectiveConfig(name="satellite_phase", params={"spacing_deg": 45.0}),
        stage_cost=StageCostConfig(q=[2e-8, 0.02, 2e-4, 2e-3], r=[1e-7, 1e-7]),
        change_penalty=ChangePenaltyConfig(scale=1e-4),
        terminal=TerminalConfig(mode="equality"),
        horizon=3 * SATELLITE_PERIOD,
        period=SATELLITE_PERIOD,
        events=[EventConfig(time=750, kind="remove_agents", agents=[1, 3], reconnect="path")],
        w0=0.0,
        steps=1500,
        notes=["thrust limit 0.237 N", "neighbours are adjacent satellites on the orbit"],
    )


def narrow_path_config() -> ScenarioConfig:
    model = ModelConfig(
        kind="double_integrator",
        params={"dim": 2, "corridor": {"length": 8.0, "half_width": 0.5}},
    )
    agents = [
        AgentConfig(model=model, x0=[-20.0, 0.0, 0.0, 0.0], reference_path_margin=0.05),
        AgentConfig(model=model, x0=[20.0, 0.0, 0.0, 0.0], reference_path_margin=0.05),
    ]
    return ScenarioConfig(
        name="narrow_path",
        description="Two agents swap sides through a corridor they cannot cross side by side.",
        agents=agents,
        graph=GraphConfig(kind="path"),
        objective=ObjectiveConfig(
            name="pseudo_huber_target",
            params={"targets": [[20.0, 0.0], [-20.0, 0.0]], "weights": [2000.0, 1000.0], "delta": 0.01},
        ),
        stage_cost=StageCostConfig(q=[1.0, 1.0, 0.1, 0.1], r=[0.1, 0.1]),
        change_penalty=ChangePenaltyConfig(scale=1e-4),
        coupling=CouplingConfig(distance=0.8, selector=[0, 1], eta=0.05),
        terminal=TerminalConfig(mode="equality"),
        horizon=20,
        period=1,
        steps=200,
        notes=[
            "corridor length 8 and half-width 0.5 centred at the origin",
            "walls are order-8 superellipse blocks with rounded corners",
        ],
    )


def quadrotor_config() -> ScenarioConfig:
    reference_state = BoxConfig(
        lower=[-20.95] * 3 + [-0.75] * 2 + [-1.95] * 3 + [-2.9] * 2,
        upper=[20.95] * 3 + [0.75] * 2 + [1.95] * 3 + [2.9] * 2,
    )
    reference_input = BoxConfig(lower=[-0.3, -0.3, 0.05], upper=[0.3, 0.3, 19.5])
    aux = BoxConfig(lower=[1.0, -20.0, -20.0], upper=[2.0, 20.0, 20.0])
    agents = [
        AgentConfig(
            model=ModelConfig(kind="quadrotor", params={"h": 0.1}),
            x0=list(start) + [0.0] * 7,
            reference_state_box=reference_state,
            reference_input_box=reference_input,
            aux_box=aux,
        )
        for start in QUADROTOR_START
    ]
    leader_follow = ObjectiveConfig(
        name="leader_follow",
        params={
            "output_dim": 3,
            "leader": 0,
            "gains": [1.0, 1.0, 0.1],
            "direction": [1.0, 1.0, 0.0],
            "start": -10.0,
            "span": 20.0,
            "start_time": 350,
            "duration": 350,
        },
    )
    return ScenarioConfig(
        name="quadrotor",
        description="Four quadrotors fly a common circle, then follow a leader tracking a moving point.",
        agents=agents,
        graph=GraphConfig(kind="complete"),
        objective=ObjectiveConfig(name="circle_formation", params={"phase_step_deg": 45.0, "radius_weight": 1.0}),
        stage_cost=StageCostConfig(
            q=[0.5, 0.5, 0.5, 0.375, 0.375, 0.25, 0.25, 0.25, 0.125, 0.125],
            r=[0.25, 0.25, 0.005],
        ),
        change_penalty=ChangePenaltyConfig(scale=1e-4),
        coupling=CouplingConfig(distance=0.4, selector=[0, 1, 2], eta=0.05),
        terminal=TerminalConfig(mode="quadratic", decrease_margin=0.1),
        horizon=10,
        period=50,
        events=[EventConfig(time=350, kind="switch_phase", horizon=30, period=1, objective=leader_follow)],
        steps=700,
        notes=[
            "terminal ingredients from the LQR at hover",
            "initial positions on a 2 m square at zero altitude",
        ],
    )


def double_integrator_oracle_config(m: int = 3, N: int = 4, T: int = 1) -> ScenarioConfig:
    if m < 2:
        raise ConfigurationError("the oracle scenario needs at least two agents", "agents")
    agents = [
        AgentConfig(model=ModelConfig(kind="double_integrator", params={"dim": 1, "h": 0.5}), x0=[float(p), 0.0])
        for p in np.linspace(-1.0, 1.0, m)
    ]
    return ScenarioConfig(
        name="double_integrator_oracle",
        description="Double integrators on a path graph reaching position consensus; every problem is a QP.",
        agents=agents,
        graph=GraphConfig(kind="path"),
        objective=ObjectiveConfig(name="consensus", params={"output_dim": 1, "weight": 1.0}),
        stage_cost=StageCostConfig(q=[1.0, 0.1], r=[0.1]),
        change_penalty=ChangePenaltyConfig(scale=1e-4),
        terminal=TerminalConfig(mode="equality"),
        horizon=N,
        period=T,
        w0=0.0,
        steps=100,
    )


def make_satellite_scenario() -> Scenario:
    return build_scenario(satellite_config())


def make_narrow_path_scenario() -> Scenario:
    return build_scenario(narrow_path_config())


def make_quadrotor_scenario() -> Scenario:
    return build_scenario(quadrotor_config())


def make_double_integrator_oracle_scenario(m: int = 3, N: int = 4, T: int = 1) -> Scenario:
    return build_scenario(double_integrator_oracle_config(m, N, T))


BUILTIN: Dict[str, Callable[[], ScenarioConfig]] = {
    "satellite": satellite_config,
    "narrow_path": narrow_path_config,
    "quadrotor": quadrotor_config,
    "double_integrator_oracle": double_integrator_oracle_config,
}


def builtin_names() -> List[str]:
    return sorted(BUILTIN)


def suggest(name: str) -> List[str]:
    return difflib.get_close_matches(name, builtin_names(), n=3, cutoff=0.4)


def load_scenario_config(source: Union[str, Path]) -> ScenarioConfig:
    """
    Configuration of a built-in scenario or of a YAML file.

    Raises:
        ConfigurationError: Unknown name (with close matches) or invalid file
    """
    source = str(source)
    if source in BUILTIN:
        return BUILTIN[source]()
    path = Path(source)
    if path.suffix in (".yaml", ".yml") or path.exists():
        return load_config(path)
    hints = suggest(source)
    hint = f"; did you mean {', '.join(repr(h) for h in hints)}?" if hints else ""
    raise ConfigurationError(f"unknown scenario '{source}'{hint} (built-ins: {', '.join(builtin_names())})", "scenario")


def load_scenario(source: Union[str, Path]) -> Scenario:
    return build_scenario(load_scenario_config(source))
