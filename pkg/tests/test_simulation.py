from types import SimpleNamespace

import numpy as np
import pytest

from cooperation.candidates import CooperationSet
from cooperation.objectives import build_objective
from core.errors import ConfigurationError, EventError, InfeasibleProblemError
from core.graph import Graph
from core.trajectory import PeriodicTrajectory
from models.base import Box
from scenarios.builder import build_scenario
from scenarios.config import EventConfig
from simulation.closed_loop import closed_loop_run, resolve_w0
from simulation.diagnostics import (
    Reference,
    align_reference,
    converged_references,
    cooperation_gaps,
    diagnose,
    lyapunov_margins,
    lyapunov_window_decrease,
    performance_J_K,
    recursive_feasibility_audit,
    settling,
)
from simulation.events import ScenarioState, apply_event
from simulation.sweep import (
    SWEEP_COLUMNS,
    SweepRow,
    horizon_sweep,
    sweep_is_monotone,
    tracking_baseline_value,
    write_sweep_csv,
)
from simulation.trace import TRAILING_COLUMNS, read_trace_csv
from solver.settings import SqpSettings


@pytest.fixture
def dense_config(oracle_config):
    return oracle_config.model_copy(update={"sqp": SqpSettings(qp_solver="dense")})


@pytest.fixture
def dense_scenario(dense_config):
    return build_scenario(dense_config)


@pytest.fixture
def trace(dense_scenario):
    return closed_loop_run(dense_scenario, steps=10, log_every=0)


def with_events(config, *events):
    return build_scenario(config.model_copy(update={"events": list(events)}))


class TestClosedLoop:
    def test_zero_steps(self, dense_scenario, tmp_path):
        trace = closed_loop_run(dense_scenario, steps=0)
        assert len(trace.states) == 1
        assert trace.steps == []
        assert trace.summary()["steps"] == 0
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        assert len(read_trace_csv(path)) == 1

    def test_negative_steps(self, dense_scenario):
        with pytest.raises(ValueError):
            closed_loop_run(dense_scenario, steps=-1)

    def test_states_follow_the_plant(self, dense_scenario, trace):
        assert len(trace.states) == 11
        models = [spec.model for spec in dense_scenario.agents]
        for t, step in enumerate(trace.steps):
            for pos, model in enumerate(models):
                expected = model.step(trace.states[t][pos], step.u[pos])
                assert np.array_equal(trace.states[t + 1][pos], expected)

    def test_every_step_is_feasible(self, trace):
        assert all(step.max_residual <= 1e-6 for step in trace.steps)
        assert trace.steps[0].fresh and trace.steps[0].candidate_violation is None
        assert all(step.candidate_violation is not None for step in trace.steps[1:])

    def test_on_step_callback(self, dense_scenario):
        seen = []
        closed_loop_run(dense_scenario, steps=3, log_every=0, on_step=lambda record: seen.append(record.t))
        assert seen == [0, 1, 2]

    def test_infeasible_first_problem_raises(self, dense_scenario):
        x0 = [np.array([25.0, 1.0]), np.zeros(2), np.array([1.0, 0.0])]
        with pytest.raises(InfeasibleProblemError) as info:
            closed_loop_run(dense_scenario, x0=x0, steps=2, log_every=0)
        assert info.value.step == 0

    def test_w0_under_reference_coupling_is_flagged(self):
        objective = build_objective("consensus", Graph.path(3), 1, output_dim=1)
        sets = [CooperationSet(1, Box.symmetric([1.0]))] * 3
        unknown = SimpleNamespace(w0=None)
        coupled = SimpleNamespace(objective=objective, coop_sets=sets, reference_coupling=True)
        uncoupled = SimpleNamespace(objective=objective, coop_sets=sets, reference_coupling=False)
        assert resolve_w0(unknown, coupled) == (0.0, True)
        assert resolve_w0(unknown, uncoupled) == (0.0, False)
        assert resolve_w0(SimpleNamespace(w0=2.0), coupled) == (2.0, False)


class TestTraceCsv:
    def test_columns(self, trace):
        columns = trace.columns()
        assert columns[0] == "t"
        assert columns[1:7] == ["x0_0", "x0_1", "x1_0", "x1_1", "x2_0", "x2_1"]
        assert columns[7:10] == ["u0_0", "u1_0", "u2_0"]
        assert columns[10:13] == ["y0_0", "y1_0", "y2_0"]
        assert tuple(columns[-5:]) == TRAILING_COLUMNS

    def test_rows(self, trace, tmp_path):
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        rows = read_trace_csv(path)
        assert len(rows) == 11
        assert float(rows[0]["x0_0"]) == pytest.approx(-1.0)
        assert rows[0]["solver_status"] == trace.steps[0].status
        assert rows[-1]["u0_0"] == "" and rows[-1]["J"] == ""

    def test_summary(self, trace):
        summary = trace.summary()
        assert summary["steps"] == 10
        assert summary["max_residual"] <= 1e-6
        assert summary["events"] == []


class TestDiagnostics:
    def test_align_reference(self):
        traj = PeriodicTrajectory(np.array([[0.0], [1.0], [2.0]]), drift=[3.0])
        aligned = align_reference(traj, 1)
        assert aligned.samples.ravel().tolist() == pytest.approx([-1.0, 0.0, 1.0])
        for k in range(1, 7):
            assert aligned.at(k) == pytest.approx(traj.at(k - 1))

    def test_lyapunov_window_decreases(self, trace):
        margins = lyapunov_margins(trace)
        assert len(margins) == 9
        assert all(m.ok for m in margins)

    def test_window_decrease_bounds(self, trace):
        with pytest.raises(ValueError):
            lyapunov_window_decrease(trace, 9)

    def test_feasibility_audit(self, trace):
        report = recursive_feasibility_audit(trace)
        assert report.passed
        assert report.min_distance is None

    def test_cooperation_gap_shrinks(self, trace):
        gaps = cooperation_gaps(trace)
        assert all(g is not None and g >= -1e-9 for g in gaps)
        assert gaps[-1] < gaps[0]
        assert len(settling(trace)) == 9

    def test_performance_needs_recorded_steps(self, trace):
        refs = converged_references(trace)
        assert set(refs) == {0, 1, 2}
        assert performance_J_K(trace, refs, 0) == 0.0
        assert performance_J_K(trace, refs, 10) >= 0.0
        with pytest.raises(ConfigurationError):
            performance_J_K(trace, refs, 11)

    def test_tracking_floor_bounds_stage_cost(self, trace):
        from simulation.diagnostics import tracking_floor

        step = trace.steps[0]
        actual = sum(
            trace.agents[i].stage_cost(x, u, xs.at(0), us.at(0))
            for i, x, u, xs, us in zip(step.agent_ids, step.x, step.u, step.ref_states, step.ref_inputs)
        )
        assert 0.0 <= tracking_floor(trace, 0) <= actual + 1e-12

    def test_report(self, trace):
        report = diagnose(trace, horizons_K=(5, 50))
        assert report.finite
        assert report.feasibility_passed
        assert report.lyapunov_violations == 0
        assert set(report.performance) == {5}
        data = report.to_dict()
        assert "lyapunov" not in data and data["steps"] == 10


class TestEvents:
    def test_noop_keeps_state(self, dense_scenario):
        state = ScenarioState(scenario=dense_scenario, x=list(dense_scenario.x0), t=2)
        assert apply_event(state, EventConfig(time=2, kind="noop")) is state

    def test_event_must_be_due(self, dense_scenario):
        state = ScenarioState(scenario=dense_scenario, x=list(dense_scenario.x0), t=2)
        with pytest.raises(EventError):
            apply_event(state, EventConfig(time=3, kind="noop"))
        with pytest.raises(EventError):
            apply_event(state, EventConfig(time=1, kind="noop"))

    def test_unknown_agent(self, dense_scenario):
        state = ScenarioState(scenario=dense_scenario, x=list(dense_scenario.x0))
        with pytest.raises(EventError):
            apply_event(state, EventConfig(time=0, kind="remove_agents", agents=[5]))

    def test_cannot_remove_everyone(self, dense_scenario):
        state = ScenarioState(scenario=dense_scenario, x=list(dense_scenario.x0))
        with pytest.raises(EventError):
            apply_event(state, EventConfig(time=0, kind="remove_agents", agents=[0, 1, 2]))

    def test_remove_agents_mid_run(self, dense_config):
        scenario = with_events(
            dense_config,
            EventConfig(time=2, kind="noop"),
            EventConfig(time=3, kind="remove_agents", agents=[1]),
        )
        trace = closed_loop_run(scenario, steps=6, log_every=0)
        assert [e.kind for e in trace.events] == ["noop", "remove_agents"]
        assert trace.steps[2].phase == 0 and not trace.steps[2].fresh
        step = trace.steps[3]
        assert step.agent_ids == [0, 2]
        assert step.phase == 1 and step.fresh
        assert step.edges == ((0, 1),)
        assert trace.state_ids[4] == [0, 2]
        assert trace.state_of(5, 1) is None
        assert 2 not in [m.t for m in lyapunov_margins(trace)]

    def test_switch_phase_changes_period(self, dense_config):
        scenario = with_events(dense_config, EventConfig(time=2, kind="switch_phase", horizon=6, period=2))
        trace = closed_loop_run(scenario, steps=4, log_every=0)
        assert [(s.horizon, s.period) for s in trace.steps] == [(4, 1), (4, 1), (6, 2), (6, 2)]
        assert trace.steps[2].fresh
        assert trace.steps[2].w0 == 0.0
        assert all(len(y.samples) == 2 for y in trace.steps[3].coop_outputs)


class TestSweep:
    def test_needs_horizons(self, dense_scenario):
        with pytest.raises(ConfigurationError):
            horizon_sweep(dense_scenario, [], K=2, steps=4)

    def test_K_within_run(self, dense_scenario):
        with pytest.raises(ConfigurationError):
            horizon_sweep(dense_scenario, [2], K=5, steps=4)

    def test_rows(self, dense_scenario):
        rows = horizon_sweep(dense_scenario, [3, 5], K=4, steps=6, baseline=False)
        assert [r.horizon for r in rows] == [3, 5]
        assert all(r.ok and r.steps == 6 for r in rows)
        assert rows[0].reference_change is None
        assert rows[1].reference_change is not None and rows[1].reference_change >= 0.0

    def test_monotone(self):
        rows = [SweepRow(2, performance=10.0), SweepRow(4, performance=8.0), SweepRow(6, performance=8.2)]
        assert sweep_is_monotone(rows)
        rows.append(SweepRow(8, performance=12.0))
        assert not sweep_is_monotone(rows)
        rows.append(SweepRow(10, error="infeasible"))
        assert sweep_is_monotone(rows[:3] + rows[4:])

    def test_csv(self, tmp_path):
        path = tmp_path / "sweep.csv"
        write_sweep_csv([SweepRow(2, performance=1.5, steps=5), SweepRow(4, error="boom")], path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(SWEEP_COLUMNS)
        assert lines[2].endswith("boom")


class TestTrackingBaseline:
    def test_zero_horizon(self, dense_scenario):
        refs = hold_references(dense_scenario)
        assert tracking_baseline_value(dense_scenario, dense_scenario.x0, refs, 0) == 0.0

    def test_staying_put_costs_nothing(self, dense_scenario):
        refs = hold_references(dense_scenario)
        value = tracking_baseline_value(dense_scenario, dense_scenario.x0, refs, 2)
        assert value == pytest.approx(0.0, abs=1e-8)

    def test_unreachable_reference(self, dense_scenario):
        refs = {
            i: Reference(PeriodicTrajectory(np.zeros((1, 2))), PeriodicTrajectory(np.zeros((1, 1))))
            for i in dense_scenario.agent_ids
        }
        with pytest.raises(InfeasibleProblemError):
            tracking_baseline_value(dense_scenario, dense_scenario.x0, refs, 2)


def hold_references(scenario):
    return {
        i: Reference(PeriodicTrajectory(np.array([x])), PeriodicTrajectory(np.zeros((1, 1))))
        for i, x in zip(scenario.agent_ids, scenario.x0)
    }


@pytest.mark.slow
def test_satellite_run_keeps_feasibility():
    from scenarios.library import make_satellite_scenario

    trace = closed_loop_run(make_satellite_scenario(), steps=60, log_every=0)
    report = diagnose(trace)
    assert report.feasibility_passed
    assert report.finite


@pytest.mark.slow
def test_quadrotor_run_stays_in_bounds():
    from scenarios.library import make_quadrotor_scenario

    trace = closed_loop_run(make_quadrotor_scenario(), steps=20, log_every=0)
    assert recursive_feasibility_audit(trace).passed


@pytest.mark.slow
def test_oracle_long_run(dense_scenario):
    trace = closed_loop_run(dense_scenario, steps=200, log_every=0)
    assert recursive_feasibility_audit(trace).passed
    assert all(m.ok for m in lyapunov_margins(trace))


@pytest.mark.slow
def test_narrow_path_keeps_distance():
    from scenarios.library import make_narrow_path_scenario

    scenario = make_narrow_path_scenario()
    trace = closed_loop_run(scenario, log_every=0)
    report = recursive_feasibility_audit(trace)
    assert report.passed
    assert report.min_distance >= 0.8 - 1e-6
    targets = {0: [20.0, 0.0], 1: [-20.0, 0.0]}
    for agent_id, target in targets.items():
        assert np.linalg.norm(trace.state_of(len(trace.steps), agent_id)[:2] - target) <= 0.5


@pytest.mark.slow
def test_satellites_spread_before_deorbit():
    import math

    from scenarios.library import SATELLITE_PERIOD, make_satellite_scenario

    trace = closed_loop_run(make_satellite_scenario(), steps=750, log_every=0)
    for t in range(750 - SATELLITE_PERIOD, 751):
        angles = [trace.state_of(t, i)[1] for i in range(5)]
        gaps = [math.degrees(b - a) for a, b in zip(angles, angles[1:])]
        assert gaps == pytest.approx([45.0] * 4, abs=1.0)


@pytest.mark.slow
def test_oracle_sweep_is_monotone(dense_scenario):
    rows = horizon_sweep(dense_scenario, [2, 4, 8, 16], K=50, steps=100, baseline=False)
    assert all(r.ok for r in rows)
    assert sweep_is_monotone(rows)
    from simulation.sweep import reference_distance

    assert reference_distance(rows[2].references, rows[3].references) <= 1e-6
