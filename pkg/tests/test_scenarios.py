import math

import pytest

from core.errors import ConfigurationError, CoopMpcError
from scenarios.builder import build_scenario, is_convex, require_audit, static_audit
from scenarios.config import EventConfig, dump_config, load_config, loads_config, parse_config, save_config
from scenarios.library import (
    BUILTIN,
    SATELLITE_PERIOD,
    builtin_names,
    double_integrator_oracle_config,
    load_scenario_config,
    narrow_path_config,
    quadrotor_config,
    satellite_config,
    suggest,
)


class TestConfig:
    def test_yaml_round_trip(self, oracle_config):
        restored = loads_config(dump_config(oracle_config))
        assert restored == oracle_config

    def test_file_round_trip(self, tmp_path):
        config = satellite_config()
        path = tmp_path / "satellite.yaml"
        save_config(config, path)
        assert load_config(path) == config

    def test_unknown_field_rejected(self, oracle_config):
        data = oracle_config.model_dump(mode="json")
        data["horizon_length"] = 3
        with pytest.raises(ConfigurationError):
            parse_config(data)

    def test_negative_horizon_names_field(self, oracle_config):
        data = oracle_config.model_dump(mode="json")
        data["horizon"] = -1
        with pytest.raises(ConfigurationError) as info:
            parse_config(data)
        assert info.value.field == "horizon"

    def test_events_must_be_ordered(self, oracle_config):
        data = oracle_config.model_dump(mode="json")
        data["events"] = [{"time": 5, "kind": "noop"}, {"time": 2, "kind": "noop"}]
        with pytest.raises(ConfigurationError):
            parse_config(data)

    def test_event_agents_must_exist(self, oracle_config):
        data = oracle_config.model_dump(mode="json")
        data["events"] = [{"time": 1, "kind": "remove_agents", "agents": [7]}]
        with pytest.raises(ConfigurationError):
            parse_config(data)

    def test_invalid_yaml(self):
        with pytest.raises(ConfigurationError) as info:
            loads_config("name: [unclosed")
        assert "line" in str(info.value)

    def test_top_level_must_be_mapping(self):
        with pytest.raises(ConfigurationError):
            loads_config("- 1\n- 2\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "missing.yaml")

    def test_scaling_bounds(self, oracle_config):
        data = oracle_config.model_dump(mode="json")
        data["scaling"] = {"slope": 0.5, "offset": 1.0}
        with pytest.raises(ConfigurationError):
            parse_config(data)


class TestLibrary:
    def test_builtins(self):
        assert builtin_names() == ["double_integrator_oracle", "narrow_path", "quadrotor", "satellite"]
        assert set(BUILTIN) == set(builtin_names())

    def test_suggestions(self):
        assert "satellite" in suggest("satelite")

    def test_unknown_scenario_lists_matches(self):
        with pytest.raises(ConfigurationError) as info:
            load_scenario_config("narow_path")
        assert "narrow_path" in str(info.value)
        assert info.value.field == "scenario"

    def test_load_from_file(self, tmp_path, oracle_config):
        path = tmp_path / "oracle.yaml"
        save_config(oracle_config, path)
        assert load_scenario_config(str(path)).name == "double_integrator_oracle"

    def test_satellite_layout(self):
        config = satellite_config()
        assert len(config.agents) == 5
        assert config.period == SATELLITE_PERIOD
        assert config.horizon == 3 * SATELLITE_PERIOD
        assert config.events[0].time == 750 and config.events[0].agents == [1, 3]
        assert [math.degrees(a.x0[1]) for a in config.agents] == pytest.approx([25.0, 50.0, 75.0, 100.0, 125.0])

    def test_narrow_path_layout(self):
        config = narrow_path_config()
        assert config.period == 1
        assert config.horizon == 20
        assert config.coupling.distance == 0.8
        assert config.objective.params["weights"] == [2000.0, 1000.0]

    def test_quadrotor_layout(self):
        config = quadrotor_config()
        assert config.period == 50
        assert config.horizon == 10
        event = config.events[0]
        assert (event.time, event.horizon, event.period) == (350, 30, 1)
        assert event.objective.name == "leader_follow"

    def test_oracle_needs_two_agents(self):
        with pytest.raises(ConfigurationError):
            double_integrator_oracle_config(m=1)


class TestBuilder:
    def test_oracle_scenario(self, oracle_scenario):
        assert oracle_scenario.m == 3
        assert oracle_scenario.graph.edges == ((0, 1), (1, 2))
        assert oracle_scenario.w0 == 0.0
        assert oracle_scenario.agent_ids == [0, 1, 2]
        assert static_audit(oracle_scenario) == []
        require_audit(oracle_scenario)

    def test_convexity(self, oracle_scenario):
        assert is_convex(oracle_scenario)
        assert not is_convex(build_scenario(narrow_path_config()))
        assert not is_convex(build_scenario(satellite_config()))

    def test_with_horizon(self, oracle_scenario):
        longer = oracle_scenario.with_horizon(8)
        assert longer.horizon == 8
        assert oracle_scenario.horizon == 4
        with pytest.raises(ConfigurationError):
            oracle_scenario.with_horizon(-1)

    def test_change_weights_scale_with_period(self):
        scenario = build_scenario(double_integrator_oracle_config(T=4))
        assert scenario.change_penalty.weights == pytest.approx((2.5e-5,) * 3)

    def test_builtin_scenarios_pass_the_audit(self):
        for config in (satellite_config(), narrow_path_config()):
            assert static_audit(build_scenario(config)) == []

    def test_zero_reference_margin_fails_the_audit(self):
        config = narrow_path_config()
        config = config.model_copy(update={"coupling": config.coupling.model_copy(update={"eta": 0.0})})
        scenario = build_scenario(config)
        assert any("eta" in failure for failure in static_audit(scenario))
        with pytest.raises(CoopMpcError):
            require_audit(scenario)

    def test_reference_box_touching_constraints_fails(self, oracle_config):
        scenario = build_scenario(oracle_config.model_copy(update={"reference_shrink": 0.0}))
        failures = static_audit(scenario)
        assert any("touch the state constraints" in failure for failure in failures)

    def test_missing_stage_cost(self, oracle_config):
        with pytest.raises(ConfigurationError):
            build_scenario(oracle_config.model_copy(update={"stage_cost": None}))

    def test_missing_aux_box(self):
        config = quadrotor_config()
        agents = [a.model_copy(update={"aux_box": None}) for a in config.agents]
        with pytest.raises(ConfigurationError):
            build_scenario(config.model_copy(update={"agents": agents, "terminal": config.terminal.model_copy(update={"mode": "equality"})}))


def test_event_defaults():
    event = EventConfig(time=3, kind="remove_agents", agents=[0])
    assert event.reconnect == "path"
