"""
Run service: resolves scenarios, drives closed-loop runs and writes their
artifacts, runs the verification suite and horizon sweeps.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence

import numpy as np
import yaml
from pydantic import BaseModel, Field, ValidationError

from config import settings
from cooperation.objectives import shift_invariance_gap
from core.errors import ConfigurationError, CoopMpcError, InfeasibleProblemError
from core.graph import Graph
from ocp.problem import build_ocp
from scenarios.builder import Scenario, build_scenario, is_convex, static_audit
from scenarios.config import ScenarioConfig, save_config
from scenarios.library import load_scenario_config
from services.plot_service import plot_service
from simulation.closed_loop import closed_loop_run
from simulation.diagnostics import diagnose, recursive_feasibility_audit
from simulation.sweep import SweepRow, horizon_sweep, sweep_is_monotone, write_sweep_csv
from simulation.trace import ClosedLoopTrace
from solver.settings import AdmmSettings, SqpSettings
from solver.sqp import solve, solve_centralized

logger = logging.getLogger(__name__)

CheckStatus = Literal["pass", "warn", "fail"]


class RunConfig(BaseModel):
    """Options of one run, verification or sweep."""

    scenario: str = Field(..., description="Built-in scenario name or path to a YAML config")
    steps: Optional[int] = Field(default=None, ge=0, description="Closed-loop steps, the scenario's when omitted")
    out_dir: Optional[str] = Field(default=None, description="Output directory, settings.output_dir when omitted")
    seed: Optional[int] = Field(default=None, description="Seed of the randomised checks")
    plots: bool = Field(default=False)
    plot_kinds: Optional[List[str]] = Field(default=None)
    soften: Optional[bool] = Field(default=None, description="Soften mid-run infeasible problems")
    sqp: Dict[str, Any] = Field(default_factory=dict, description="SQP setting overrides")
    admm: Dict[str, Any] = Field(default_factory=dict, description="ADMM setting overrides")


@dataclass
class RunResult:
    scenario: str
    steps: int
    output_dir: Path
    trace_path: Path
    metrics_path: Path
    messages_path: Optional[Path]
    plots: List[Path]
    metrics: Dict[str, Any]
    trace: Optional[ClosedLoopTrace] = field(default=None, repr=False)
    exit_code: int = 0


@dataclass
class CheckResult:
    name: str
    status: CheckStatus
    detail: str = ""


@dataclass
class VerifyResult:
    scenario: str
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1


@dataclass
class SweepResult:
    scenario: str
    rows: List[SweepRow]
    path: Path
    monotone: bool

    @property
    def exit_code(self) -> int:
        return 0 if all(r.ok for r in self.rows) else 1


def plain(value):
    """Convert numpy scalars and arrays to built-in types for YAML and JSON output."""
    if isinstance(value, dict):
        return {str(k) if not isinstance(k, (str, int)) else k: plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


class RunService:
    """
    Service orchestrating scenario runs.
    """

    def resolve(self, config: RunConfig) -> Scenario:
        """
        Scenario of a run configuration with the solver overrides applied.

        Raises:
            ConfigurationError: unknown scenario, invalid file or invalid override
        """
        scenario_config = load_scenario_config(config.scenario)
        return build_scenario(self.apply_overrides(scenario_config, config))

    def apply_overrides(self, scenario_config: ScenarioConfig, config: RunConfig) -> ScenarioConfig:
        update: Dict[str, Any] = {}
        try:
            if config.sqp:
                update["sqp"] = SqpSettings.model_validate({**scenario_config.sqp.model_dump(), **config.sqp})
            if config.admm:
                update["admm"] = AdmmSettings.model_validate({**scenario_config.admm.model_dump(), **config.admm})
        except ValidationError as e:
            error = e.errors()[0]
            location = ".".join(str(p) for p in error["loc"])
            raise ConfigurationError(f"invalid solver override {location}: {error['msg']}", location) from e
        if config.steps is not None:
            update["steps"] = config.steps
        if config.soften is not None:
            update["soften_on_infeasibility"] = config.soften
        return scenario_config.model_copy(update=update) if update else scenario_config

    def output_dir(self, config: RunConfig, scenario: Scenario, suffix: str = "") -> Path:
        root = Path(config.out_dir or settings.output_dir)
        target = root / (scenario.name + suffix)
        try:
            target.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigurationError(f"output directory {target} is not writable: {e}", "out") from e
        return target

    def run(self, config: RunConfig) -> RunResult:
        """
        Run a scenario in closed loop and write its artifacts.

        Writes trace.csv, metrics.yaml, messages.csv, scenario.yaml and,
        when requested, PNG plots under <out>/<scenario>/.

        Raises:
            ConfigurationError: invalid configuration or output directory
            InfeasibleProblemError: infeasible problem, with its step index
        """
        scenario = self.resolve(config)
        out = self.output_dir(config, scenario)
        save_config(scenario.config, out / "scenario.yaml")
        logger.info(f"run of '{scenario.name}' writing to {out}")

        trace = closed_loop_run(scenario, steps=config.steps, soften=config.soften)
        trace_path = out / "trace.csv"
        trace.to_csv(trace_path)
        messages_path = None
        if trace.messages is not None:
            messages_path = out / "messages.csv"
            trace.messages.to_csv(messages_path)

        report = diagnose(
            trace,
            lyapunov_tolerance=settings.lyapunov_tolerance,
            feasibility_tolerance=settings.feasibility_tolerance,
            horizons_K=[len(trace.steps)] if trace.steps else [],
        )
        metrics = plain({
            **trace.summary(),
            "seed": settings.default_seed if config.seed is None else config.seed,
            "diagnostics": report.to_dict(),
        })
        metrics_path = out / "metrics.yaml"
        with open(metrics_path, "w", encoding="utf-8") as handle:
            yaml.safe_dump(metrics, handle, sort_keys=False)

        plots: List[Path] = []
        if config.plots:
            models = [spec.model for spec in scenario.agents]
            kinds = config.plot_kinds or plot_service.default_kinds([m.name for m in models], [m.p for m in models])
            plots = plot_service.render(trace_path, out / "plots", kinds)

        logger.info(f"run of '{scenario.name}' finished: {len(trace.steps)} steps, metrics in {metrics_path}")
        return RunResult(
            scenario=scenario.name,
            steps=len(trace.steps),
            output_dir=out,
            trace_path=trace_path,
            metrics_path=metrics_path,
            messages_path=messages_path,
            plots=plots,
            metrics=metrics,
            trace=trace,
        )

    # ----- verification -----

    def _oracle_check(self, scenario: Scenario) -> CheckResult:
        problem = build_ocp(scenario, scenario.x0, None, 0)
        distributed = solve(problem, None, scenario.sqp, scenario.admm)
        central = solve_centralized(problem, None, scenario.sqp)
        deviation = float(np.max(np.abs(problem.join(distributed.blocks) - problem.join(central.blocks))))
        status: CheckStatus = "pass" if deviation <= settings.oracle_tolerance else "fail"
        return CheckResult("oracle_equivalence", status, f"max deviation {deviation:.2e}")

    def _shift_check(self, scenario: Scenario, seed: int) -> CheckResult:
        objective = scenario.objective
        if not objective.shift_invariant:
            return CheckResult("shift_invariance", "warn", f"objective '{objective.name}' tracks a time-varying target")
        gap = shift_invariance_gap(objective, np.random.default_rng(seed), trials=100)
        return CheckResult("shift_invariance", "pass" if gap <= 1e-9 else "fail", f"largest relative gap {gap:.2e}")

    @staticmethod
    def _state_chain_check(trace: ClosedLoopTrace) -> CheckResult:
        for step in trace.steps:
            for agent_id, x, u in zip(step.agent_ids, step.x, step.u):
                stored = trace.state_of(step.t + 1, agent_id)
                if stored is None:
                    continue
                if not np.array_equal(trace.agents[agent_id].model.step(x, u), stored):
                    return CheckResult("state_chain", "fail", f"re-simulated state of agent {agent_id} differs at t={step.t + 1}")
        return CheckResult("state_chain", "pass", f"{len(trace.steps)} transitions re-simulated")

    def verify(self, config: RunConfig) -> VerifyResult:
        """
        Diagnostic suite of a scenario.

        Structural audit, oracle equivalence for convex scenarios, shift
        invariance of the objective, then a closed-loop run checked for state
        chain integrity, recursive and candidate feasibility, message
        locality and the Lyapunov window decrease. The Lyapunov check only
        warns for non-convex scenarios or estimated W0.
        """
        scenario = self.resolve(config)
        checks: List[CheckResult] = []
        failures = static_audit(scenario)
        checks.append(CheckResult("static_audit", "fail" if failures else "pass", "; ".join(failures)))
        if failures:
            return VerifyResult(scenario.name, checks)

        convex = is_convex(scenario)
        if convex:
            checks.append(self._oracle_check(scenario))
        seed = settings.default_seed if config.seed is None else config.seed
        checks.append(self._shift_check(scenario, seed))

        try:
            trace = closed_loop_run(scenario, steps=config.steps, soften=False)
        except InfeasibleProblemError as e:
            checks.append(CheckResult("closed_loop", "fail", str(e)))
            return VerifyResult(scenario.name, checks)
        checks.append(CheckResult("closed_loop", "pass", f"{len(trace.steps)} steps"))
        checks.append(self._state_chain_check(trace))

        tolerance = settings.feasibility_tolerance
        feasibility = recursive_feasibility_audit(trace, tolerance)
        checks.append(CheckResult(
            "recursive_feasibility",
            "pass" if feasibility.passed else "fail",
            f"path {feasibility.max_path:.2e}, coupling {feasibility.max_coupling:.2e}"
            + ("" if feasibility.min_distance is None else f", min distance {feasibility.min_distance:.4f}"),
        ))
        checks.append(CheckResult(
            "candidate_feasibility",
            "pass" if feasibility.max_candidate <= tolerance else "fail",
            f"largest candidate violation {feasibility.max_candidate:.2e}",
        ))

        if trace.messages is not None and trace.steps:
            last = trace.steps[-1]
            try:
                trace.messages.check_locality(Graph(len(last.agent_ids), last.edges))
                checks.append(CheckResult("message_locality", "pass", f"{trace.messages.total_bytes} bytes in the last solve"))
            except CoopMpcError as e:
                checks.append(CheckResult("message_locality", "fail", str(e)))

        report = diagnose(trace, settings.lyapunov_tolerance, tolerance)
        if not trace.steps:
            checks.append(CheckResult("lyapunov_windows", "warn", "no steps to check"))
        elif report.lyapunov_violations == 0:
            checks.append(CheckResult("lyapunov_windows", "pass", f"worst margin {report.worst_window_margin}"))
        else:
            asserted = convex and not trace.w0_approximate
            detail = f"{report.lyapunov_violations} windows increase, worst margin {report.worst_window_margin:.3e}"
            if not asserted:
                logger.warning(f"Lyapunov windows of '{scenario.name}' increase (not asserted): {detail}")
            checks.append(CheckResult("lyapunov_windows", "fail" if asserted else "warn", detail))

        for check in checks:
            logger.info(f"verify '{scenario.name}': {check.name} {check.status} {check.detail}")
        return VerifyResult(scenario.name, checks)

    # ----- sweep -----

    def sweep(self, config: RunConfig, horizons: Sequence[int], K: int) -> SweepResult:
        """
        Horizon sweep written to <out>/<scenario>_sweep/sweep.csv.

        Raises:
            ConfigurationError: empty horizons or K beyond the run length
        """
        scenario = self.resolve(config)
        steps = scenario.config.steps if config.steps is None else config.steps
        if not horizons:
            raise ConfigurationError("the sweep needs at least one horizon", "horizons")
        if K > steps:
            raise ConfigurationError(f"K={K} exceeds the run length {steps}", "k")
        out = self.output_dir(config, scenario, "_sweep")
        rows = horizon_sweep(scenario, horizons, K, steps=steps)
        path = out / "sweep.csv"
        write_sweep_csv(rows, path)
        monotone = sweep_is_monotone(rows, settings.sweep_tolerance)
        if not monotone:
            logger.warning(f"sweep of '{scenario.name}': J_K increases with N beyond {settings.sweep_tolerance:.0%}")
        return SweepResult(scenario.name, rows, path, monotone)


# Global instance
run_service = RunService()
