"""
Turns a validated scenario configuration into runtime objects.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from cooperation.objectives import CooperationObjective, build_objective
from cooperation.penalties import ChangePenalty, Scaling
from core.errors import CoopMpcError, ConfigurationError, DimensionMismatchError
from core.graph import Graph
from models.base import AgentModel, Box, CouplingConstraint, min_distance
from models.library import build_model
from ocp.costs import StageCost
from ocp.problem import AgentSpec
from ocp.terminal import TerminalIngredients, lqr_terminal_synthesis
from scenarios.config import AgentConfig, EventConfig, GraphConfig, ObjectiveConfig, ScenarioConfig
from solver.settings import AdmmSettings, SqpSettings

logger = logging.getLogger(__name__)

# objective parameters holding one entry per agent
PER_AGENT_PARAMS = ("targets", "weights")


@dataclass
class Scenario:
    """
    Runtime form of a scenario.

    ``agent_ids`` maps current agent positions to positions in the
    configuration's agent list, so that events can name agents by their
    original index after earlier removals.
    """

    config: ScenarioConfig
    agents: List[AgentSpec]
    graph: Graph
    objective: CooperationObjective
    change_penalty: ChangePenalty
    scaling: Scaling
    coupling: Optional[CouplingConstraint]
    reference_coupling: bool
    horizon: int
    period: int
    x0: List[np.ndarray]
    events: List[EventConfig] = field(default_factory=list)
    sqp: SqpSettings = field(default_factory=SqpSettings)
    admm: AdmmSettings = field(default_factory=AdmmSettings)
    w0: Optional[float] = None
    agent_ids: List[int] = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.config.name

    @property
    def m(self) -> int:
        return self.graph.m

    def with_horizon(self, horizon: int) -> "Scenario":
        if horizon < 0:
            raise ConfigurationError("horizon must be non-negative", "horizon")
        return dataclasses.replace(self, horizon=int(horizon))


def build_graph(config: GraphConfig, m: int) -> Graph:
    if config.kind == "path":
        return Graph.path(m)
    if config.kind == "complete":
        return Graph.complete(m)
    if config.kind == "empty":
        return Graph.empty(m)
    return Graph(m, tuple(tuple(e) for e in config.edges))


def restrict_params(params: Dict[str, Any], keep: Sequence[int], m: int) -> Dict[str, Any]:
    """Drop the entries of removed agents from per-agent objective parameters."""
    restricted = dict(params)
    for key in PER_AGENT_PARAMS:
        value = restricted.get(key)
        if isinstance(value, (list, tuple)) and len(value) == m:
            restricted[key] = [value[i] for i in keep]
    return restricted


def make_objective(config: ObjectiveConfig, graph: Graph, period: int, w0: Optional[float] = None) -> CooperationObjective:
    params = dict(config.params)
    if w0 is not None:
        params.setdefault("minimum", w0)
    return build_objective(config.name, graph, period, **params)


def output_box(model: AgentModel, state_box: Box) -> Box:
    """
    Bounds on the output implied by state bounds.

    Only outputs that copy a single state component inherit its bounds; all
    other components are unbounded.
    """
    c, d = model.output_jacobians(np.zeros(model.n), np.zeros(model.q))
    lower = np.full(model.p, -np.inf)
    upper = np.full(model.p, np.inf)
    for row in range(model.p):
        hits = np.flatnonzero(c[row])
        if hits.size == 1 and c[row, hits[0]] == 1.0 and not np.any(d[row]):
            lower[row] = state_box.lower[hits[0]]
            upper[row] = state_box.upper[hits[0]]
    return Box(lower, upper)


def _margins(outer: Box, inner: Box) -> np.ndarray:
    upper = np.where(np.isfinite(outer.upper), outer.upper - inner.upper, np.inf)
    lower = np.where(np.isfinite(outer.lower), inner.lower - outer.lower, np.inf)
    return np.minimum(upper, lower)


def _stage_cost(agent: AgentConfig, config: ScenarioConfig, index: int) -> StageCost:
    cost = agent.stage_cost or config.stage_cost
    if cost is None:
        raise ConfigurationError(f"agent {index} has no stage cost", f"agents.{index}.stage_cost")
    return StageCost.diagonal(cost.q, cost.r)


def _terminal(config: ScenarioConfig, model: AgentModel, x0: np.ndarray, cost: StageCost,
              ref_state: Box, ref_input: Box, index: int) -> TerminalIngredients:
    terminal = config.terminal
    if terminal.mode == "equality":
        return TerminalIngredients.equality()
    x_ref, u_ref = model.hold_reference(x0, 1)
    selector = config.coupling.selector if config.coupling is not None else ()
    coupling_margin = 0.5 * config.coupling.eta if config.coupling is not None else None
    logger.info(f"synthesising quadratic terminal ingredients for agent {index} ({model.name})")
    return lqr_terminal_synthesis(
        model,
        x_ref[0],
        u_ref[0],
        cost,
        state_margin=_margins(model.state_box, ref_state),
        input_margin=_margins(model.input_box, ref_input),
        coupling_selector=selector,
        coupling_margin=coupling_margin,
        decrease_margin=terminal.decrease_margin,
        samples=terminal.samples,
        alpha0=terminal.alpha0,
    )


def build_agent(config: ScenarioConfig, index: int, with_aux: bool, change_weight: float) -> AgentSpec:
    agent = config.agents[index]
    model = build_model(agent.model.kind, **agent.model.params)
    x0 = np.asarray(agent.x0, dtype=float)
    if x0.size != model.n:
        raise DimensionMismatchError(f"agent {index}: x0 of size {x0.size} for model '{model.name}' with n={model.n}")
    cost = _stage_cost(agent, config, index)
    ref_state = agent.reference_state_box.to_box() if agent.reference_state_box else model.state_box.shrink(config.reference_shrink)
    ref_input = agent.reference_input_box.to_box() if agent.reference_input_box else model.input_box.shrink(config.reference_shrink)
    outputs = agent.output_box.to_box() if agent.output_box else output_box(model, ref_state)
    aux_box = None
    if with_aux:
        if agent.aux_box is None:
            raise ConfigurationError(f"objective needs auxiliary variables but agent {index} has no aux box", f"agents.{index}.aux_box")
        aux_box = agent.aux_box.to_box()
    return AgentSpec(
        model=model,
        stage_cost=cost,
        terminal=_terminal(config, model, x0, cost, ref_state, ref_input, index),
        reference_state_box=ref_state,
        reference_input_box=ref_input,
        output_box=outputs,
        aux_box=aux_box,
        state_drift=None if agent.state_drift is None else np.asarray(agent.state_drift, dtype=float),
        change_weight=change_weight,
        reference_path_margin=agent.reference_path_margin,
    )


def change_weights(config: ScenarioConfig, period: int, agent_ids: Sequence[int]) -> List[float]:
    """delta_i per current agent: explicit weights or scale / T."""
    penalty = config.change_penalty
    if penalty.weights is not None:
        if len(penalty.weights) != len(config.agents):
            raise ConfigurationError("one change penalty weight per agent required", "change_penalty.weights")
        return [float(penalty.weights[i]) for i in agent_ids]
    return [penalty.scale / period for _ in agent_ids]


def attach_objective(agents: Sequence[AgentSpec], objective: CooperationObjective, config: ScenarioConfig,
                     agent_ids: Sequence[int], weights: Sequence[float]) -> List[AgentSpec]:
    """Agent specs whose auxiliary boxes and change weights match ``objective``."""
    updated = []
    for pos, (spec, original) in enumerate(zip(agents, agent_ids)):
        aux_box = None
        if objective.aux_dims[pos] > 0:
            box = config.agents[original].aux_box
            if box is None:
                raise ConfigurationError(
                    f"objective '{objective.name}' needs auxiliary variables but agent {original} has no aux box",
                    f"agents.{original}.aux_box",
                )
            aux_box = box.to_box()
        updated.append(dataclasses.replace(spec, aux_box=aux_box, change_weight=weights[pos]))
    return updated


def build_coupling(config: ScenarioConfig) -> Optional[CouplingConstraint]:
    if config.coupling is None:
        return None
    return min_distance(config.coupling.distance, config.coupling.selector, eta=config.coupling.eta)


def build_scenario(config: ScenarioConfig) -> Scenario:
    """
    Instantiate models, costs, terminal ingredients and the objective.

    Args:
        config: Validated scenario configuration

    Returns:
        Runtime scenario at its initial phase
    """
    m = len(config.agents)
    graph = build_graph(config.graph, m)
    objective = make_objective(config.objective, graph, config.period, config.w0)
    agent_ids = list(range(m))
    weights = change_weights(config, config.period, agent_ids)
    agents = [build_agent(config, i, objective.aux_dims[i] > 0, weights[i]) for i in range(m)]
    scenario = Scenario(
        config=config,
        agents=agents,
        graph=graph,
        objective=objective,
        change_penalty=ChangePenalty(weights),
        scaling=Scaling(config.scaling.slope, config.scaling.offset),
        coupling=build_coupling(config),
        reference_coupling=config.reference_coupling,
        horizon=config.horizon,
        period=config.period,
        x0=[np.asarray(a.x0, dtype=float) for a in config.agents],
        events=list(config.events),
        sqp=config.sqp,
        admm=config.admm,
        w0=config.w0,
        agent_ids=agent_ids,
    )
    logger.info(f"scenario '{config.name}': {m} agents, {len(graph.edges)} edges, N={config.horizon}, T={config.period}")
    return scenario


def static_audit(scenario: Scenario) -> List[str]:
    """
    Structural checks that must hold before a run.

    Returns:
        Failure descriptions, empty when the scenario passes
    """
    failures = []
    for i, spec in enumerate(scenario.agents):
        model = spec.model
        skip = model.angle_states
        if not model.state_box.is_compact(skip=skip):
            failures.append(f"agent {i}: state constraint set is not compact")
        if not model.input_box.is_compact():
            failures.append(f"agent {i}: input constraint set is not compact")
        if not spec.reference_state_box.strictly_inside(model.state_box, skip=skip):
            failures.append(f"agent {i}: admissible reference states touch the state constraints")
        if not spec.reference_input_box.strictly_inside(model.input_box):
            failures.append(f"agent {i}: admissible reference inputs touch the input constraints")
        if spec.change_weight <= 0:
            failures.append(f"agent {i}: change penalty weight must be positive")
        for j in scenario.objective.scope(i):
            if j != i and not scenario.graph.has_edge(i, j):
                failures.append(f"agent {i}: cooperation term reads non-neighbour {j}")
    coupling = scenario.coupling
    if coupling is not None and scenario.graph.edges and coupling.eta <= 0:
        failures.append(f"coupling '{coupling.name}': reference margin eta must be positive, got {coupling.eta}")
    if scenario.scaling(scenario.horizon) < scenario.horizon:
        failures.append(f"lambda(N) = {scenario.scaling(scenario.horizon)} is below N = {scenario.horizon}")
    for failure in failures:
        logger.warning(f"static audit of '{scenario.name}': {failure}")
    return failures


def require_audit(scenario: Scenario):
    failures = static_audit(scenario)
    if failures:
        raise CoopMpcError(f"scenario '{scenario.name}' failed the static audit: {'; '.join(failures)}")


def is_convex(scenario: Scenario) -> bool:
    """True when every problem of the scenario is a convex QP: linear agents, no coupling or path constraints."""
    return (
        scenario.objective.convex
        and scenario.coupling is None
        and all(spec.model.is_linear and not spec.model.path_constraints for spec in scenario.agents)
    )
