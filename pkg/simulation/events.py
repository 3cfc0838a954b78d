"""
Topology changes and task switches applied during a closed-loop run.
"""
import dataclasses
import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from cooperation.objectives import build_objective
from cooperation.penalties import ChangePenalty
from core.errors import EventError
from core.trajectory import PeriodicTrajectory
from scenarios.builder import Scenario, attach_objective, change_weights, make_objective, restrict_params
from scenarios.config import EventConfig
from solver.solution import OcpSolution

logger = logging.getLogger(__name__)


@dataclass
class ScenarioState:
    """
    Everything the closed loop carries from one step to the next.

    ``y_pr`` and ``previous`` are cleared by events: the first problem after
    a change omits the change penalty and starts from the hold-reference guess.
    """

    scenario: Scenario
    x: List[np.ndarray]
    t: int = 0
    y_pr: Optional[List[PeriodicTrajectory]] = None
    previous: Optional[OcpSolution] = None
    phase: int = 0

    def fresh(self, scenario: Scenario, x: List[np.ndarray]) -> "ScenarioState":
        return ScenarioState(scenario=scenario, x=x, t=self.t, y_pr=None, previous=None, phase=self.phase + 1)


def _remove_agents(state: ScenarioState, event: EventConfig) -> ScenarioState:
    scenario = state.scenario
    positions = []
    for agent_id in event.agents:
        if agent_id not in scenario.agent_ids:
            raise EventError(f"event at t={event.time}: agent {agent_id} is not part of the system")
        positions.append(scenario.agent_ids.index(agent_id))
    if len(positions) >= scenario.m:
        raise EventError(f"event at t={event.time} would remove every agent")
    keep = [pos for pos in range(scenario.m) if pos not in positions]
    graph = scenario.graph.remove_agents(positions, event.reconnect)
    agent_ids = [scenario.agent_ids[pos] for pos in keep]
    objective = build_objective(
        scenario.objective.name,
        graph,
        scenario.period,
        **restrict_params(scenario.objective.parameters(), keep, scenario.m),
        **({"minimum": scenario.w0} if scenario.w0 is not None else {}),
    )
    weights = change_weights(scenario.config, scenario.period, agent_ids)
    agents = attach_objective([scenario.agents[pos] for pos in keep], objective, scenario.config, agent_ids, weights)
    updated = dataclasses.replace(
        scenario,
        agents=agents,
        graph=graph,
        objective=objective,
        change_penalty=ChangePenalty(weights),
        x0=[scenario.x0[pos] for pos in keep],
        agent_ids=agent_ids,
    )
    logger.info(
        f"t={event.time}: removed agents {list(event.agents)}, {updated.m} remain, "
        f"graph reconnected as '{event.reconnect}' with {len(graph.edges)} edges"
    )
    return state.fresh(updated, [state.x[pos] for pos in keep])


def _switch_phase(state: ScenarioState, event: EventConfig) -> ScenarioState:
    scenario = state.scenario
    horizon = scenario.horizon if event.horizon is None else event.horizon
    period = scenario.period if event.period is None else event.period
    if event.objective is not None:
        objective = make_objective(event.objective, scenario.graph, period)
        w0 = None
    else:
        objective = build_objective(scenario.objective.name, scenario.graph, period, **scenario.objective.parameters())
        w0 = scenario.w0
    weights = change_weights(scenario.config, period, scenario.agent_ids)
    agents = attach_objective(scenario.agents, objective, scenario.config, scenario.agent_ids, weights)
    updated = dataclasses.replace(
        scenario,
        agents=agents,
        objective=objective,
        change_penalty=ChangePenalty(weights),
        horizon=horizon,
        period=period,
        w0=w0,
    )
    logger.info(
        f"t={event.time}: switched to objective '{objective.name}', N={horizon}, T={period}"
    )
    return state.fresh(updated, list(state.x))


def apply_event(state: ScenarioState, event: EventConfig) -> ScenarioState:
    """
    Apply one scheduled event at the current step.

    Args:
        state: Closed-loop state at time ``event.time``
        event: Event to apply

    Returns:
        The updated state; the same object for a no-op

    Raises:
        EventError: The event is not due now or names an unknown agent
    """
    if event.time < state.t:
        raise EventError(f"event scheduled for t={event.time} lies in the past (now t={state.t})")
    if event.time != state.t:
        raise EventError(f"event scheduled for t={event.time} applied at t={state.t}")
    if event.kind == "noop":
        return state
    if event.kind == "remove_agents":
        return _remove_agents(state, event)
    if event.kind == "switch_phase":
        return _switch_phase(state, event)
    raise EventError(f"unknown event kind '{event.kind}'")


def describe(event: EventConfig) -> str:
    if event.kind == "remove_agents":
        return f"removed agents {list(event.agents)} ({event.reconnect})"
    if event.kind == "switch_phase":
        name = event.objective.name if event.objective is not None else "same objective"
        return f"{name}, N={event.horizon}, T={event.period}"
    return "no-op"
