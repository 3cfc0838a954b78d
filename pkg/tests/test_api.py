import asyncio

import pytest
from fastapi.testclient import TestClient
from sqlalchemy.ext.asyncio import AsyncSession, async_sessionmaker, create_async_engine
from sqlalchemy.pool import NullPool

from database import Base, get_db
from main import app


@pytest.fixture
def client(tmp_path, out_dir):
    engine = create_async_engine(f"sqlite+aiosqlite:///{tmp_path / 'runs.db'}", poolclass=NullPool)
    sessions = async_sessionmaker(engine, class_=AsyncSession, expire_on_commit=False)

    async def create_tables():
        async with engine.begin() as conn:
            await conn.run_sync(Base.metadata.create_all)

    async def override_db():
        async with sessions() as session:
            yield session

    asyncio.run(create_tables())
    app.dependency_overrides[get_db] = override_db
    yield TestClient(app)
    app.dependency_overrides.clear()
    asyncio.run(engine.dispose())


def test_health(client):
    assert client.get("/health").json() == {"status": "healthy"}


def test_list_scenarios(client):
    body = client.get("/api/scenarios").json()
    assert body["count"] == 4
    assert "satellite" in body["scenarios"]


def test_get_scenario(client):
    body = client.get("/api/scenarios/narrow_path").json()
    assert body["name"] == "narrow_path"
    assert body["config"]["horizon"] == 20


def test_unknown_scenario_suggests(client):
    response = client.get("/api/scenarios/satelite")
    assert response.status_code == 404
    assert "satellite" in response.json()["detail"]


def test_run_is_stored(client):
    response = client.post("/api/runs", json={
        "scenario": "double_integrator_oracle", "steps": 3, "sqp": {"qp_solver": "dense"},
    })
    assert response.status_code == 200
    run = response.json()
    assert run["status"] == "completed" and run["exit_code"] == 0
    assert run["metrics"]["steps"] == 3
    stored = client.get(f"/api/runs/{run['run_id']}").json()
    assert stored["run_id"] == run["run_id"]
    assert stored["command"] == "run"


def test_run_with_unknown_scenario(client):
    response = client.post("/api/runs", json={"scenario": "nowhere"})
    assert response.status_code == 422


def test_invalid_request(client):
    response = client.post("/api/runs", json={"scenario": "double_integrator_oracle", "steps": -1})
    assert response.status_code == 422


def test_missing_run(client):
    assert client.get("/api/runs/does-not-exist").status_code == 404


def test_verify(client):
    response = client.post("/api/verify", json={
        "scenario": "double_integrator_oracle", "steps": 4, "sqp": {"qp_solver": "dense"},
    })
    body = response.json()
    assert body["passed"] and body["exit_code"] == 0
    assert any(c["name"] == "oracle_equivalence" for c in body["checks"])


def test_sweep_needs_horizons(client):
    response = client.post("/api/sweeps", json={"scenario": "double_integrator_oracle", "horizons": [], "k": 2})
    assert response.status_code == 422
