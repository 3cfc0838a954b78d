"""
Shared fixtures. Long closed-loop runs are marked ``slow`` and only run
with COOPMPC_SLOW=1.
"""
import os
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from core.graph import Graph
from scenarios.library import double_integrator_oracle_config, make_double_integrator_oracle_scenario


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long closed-loop runs, enabled with COOPMPC_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("COOPMPC_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set COOPMPC_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def path3():
    return Graph.path(3)


@pytest.fixture
def oracle_config():
    return double_integrator_oracle_config()


@pytest.fixture
def oracle_scenario():
    return make_double_integrator_oracle_scenario()


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    """Output root isolated per test."""
    from config import settings

    target = tmp_path / "runs"
    monkeypatch.setattr(settings, "output_dir", str(target))
    return target
