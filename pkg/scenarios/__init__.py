"""
Scenarios package initialization.
"""
from scenarios.builder import Scenario, build_scenario, is_convex, require_audit, static_audit
from scenarios.config import ScenarioConfig, dump_config, load_config, loads_config, save_config
from scenarios.library import (
    BUILTIN,
    builtin_names,
    load_scenario,
    load_scenario_config,
    make_double_integrator_oracle_scenario,
    make_narrow_path_scenario,
    make_quadrotor_scenario,
    make_satellite_scenario,
)

__all__ = [
    "Scenario",
    "build_scenario",
    "is_convex",
    "require_audit",
    "static_audit",
    "ScenarioConfig",
    "dump_config",
    "load_config",
    "loads_config",
    "save_config",
    "BUILTIN",
    "builtin_names",
    "load_scenario",
    "load_scenario_config",
    "make_double_integrator_oracle_scenario",
    "make_narrow_path_scenario",
    "make_quadrotor_scenario",
    "make_satellite_scenario",
]
