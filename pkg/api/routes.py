"""
API routes for the cooperative MPC engine.
"""
import logging
import uuid
from pathlib import Path

from fastapi import APIRouter, Depends, HTTPException, status
from fastapi.concurrency import run_in_threadpool
from sqlalchemy import select
from sqlalchemy.ext.asyncio import AsyncSession

from api.schemas import (
    CheckResponse,
    RunRequest,
    RunResponse,
    ScenarioListResponse,
    ScenarioResponse,
    SweepRequest,
    VerifyResponse,
)
from config import settings
from core.errors import ConfigurationError, CoopMpcError, InfeasibleProblemError
from database import SimulationRun, get_db
from scenarios.library import BUILTIN, builtin_names, suggest
from services.run_service import RunConfig, plain, run_service

logger = logging.getLogger(__name__)

router = APIRouter()


def _run_config(request: RunRequest, run_id: str) -> RunConfig:
    return RunConfig(
        scenario=request.scenario,
        steps=request.steps,
        out_dir=str(Path(settings.output_dir) / run_id),
        seed=request.seed,
        plots=request.plots,
        soften=request.soften,
        sqp=request.sqp,
        admm=request.admm,
    )


def _response(run: SimulationRun) -> RunResponse:
    return RunResponse(
        run_id=run.run_id,
        command=run.command,
        scenario=run.scenario,
        steps=run.steps,
        status=run.status,
        exit_code=run.exit_code,
        output_dir=run.output_dir,
        metrics=run.metrics or {},
        error=run.error,
        created_at=run.created_at,
    )


async def _store(db: AsyncSession, run: SimulationRun) -> SimulationRun:
    db.add(run)
    await db.commit()
    await db.refresh(run)
    return run


@router.get("/scenarios", response_model=ScenarioListResponse)
async def list_scenarios():
    """
    List the built-in scenarios.
    """
    names = builtin_names()
    return ScenarioListResponse(scenarios=names, count=len(names))


@router.get("/scenarios/{name}", response_model=ScenarioResponse)
async def get_scenario(name: str):
    """
    Exported configuration of a built-in scenario.

    Args:
        name: Scenario name

    Returns:
        The configuration as JSON
    """
    if name not in BUILTIN:
        hints = suggest(name)
        hint = f"; did you mean {', '.join(hints)}?" if hints else ""
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"Unknown scenario '{name}'{hint}")
    config = BUILTIN[name]()
    return ScenarioResponse(name=config.name, description=config.description, config=config.model_dump(mode="json"))


@router.post("/runs", response_model=RunResponse)
async def create_run(
    request: RunRequest,
    db: AsyncSession = Depends(get_db)
):
    """
    Run a scenario in closed loop and store the run record.

    An infeasible problem ends the run with status "failed" and exit code 1.

    Args:
        request: Run request
        db: Database session

    Returns:
        The stored run with its metrics
    """
    run_id = str(uuid.uuid4())
    config = _run_config(request, run_id)
    try:
        result = await run_in_threadpool(run_service.run, config)
        run = SimulationRun(
            run_id=run_id,
            command="run",
            scenario=result.scenario,
            steps=result.steps,
            status="completed",
            exit_code=0,
            output_dir=str(result.output_dir),
            metrics=plain(result.metrics),
        )
    except ConfigurationError as e:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e))
    except InfeasibleProblemError as e:
        logger.warning(f"run {run_id} of '{request.scenario}' failed at step {e.step}: {e}")
        run = SimulationRun(
            run_id=run_id,
            command="run",
            scenario=request.scenario,
            steps=e.step,
            status="failed",
            exit_code=1,
            output_dir=config.out_dir,
            metrics={"step": e.step, "group": e.group},
            error=str(e),
        )
    except Exception as e:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Error running scenario: {str(e)}"
        )
    return _response(await _store(db, run))


@router.get("/runs/{run_id}", response_model=RunResponse)
async def get_run(
    run_id: str,
    db: AsyncSession = Depends(get_db)
):
    """
    Get a stored run.
    """
    result = await db.execute(select(SimulationRun).where(SimulationRun.run_id == run_id))
    run = result.scalars().first()
    if run is None:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"Unknown run '{run_id}'")
    return _response(run)


@router.post("/verify", response_model=VerifyResponse)
async def verify(
    request: RunRequest,
    db: AsyncSession = Depends(get_db)
):
    """
    Run the diagnostic suite of a scenario.

    Returns:
        Pass, warn or fail per check; exit code 0 iff nothing failed
    """
    run_id = str(uuid.uuid4())
    config = _run_config(request, run_id)
    try:
        result = await run_in_threadpool(run_service.verify, config)
    except ConfigurationError as e:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e))
    except Exception as e:
        raise HTTPException(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            detail=f"Error verifying scenario: {str(e)}"
        )
    checks = [CheckResponse(name=c.name, status=c.status, detail=c.detail) for c in result.checks]
    await _store(db, SimulationRun(
        run_id=run_id,
        command="verify",
        scenario=result.scenario,
        steps=request.steps,
        status="completed" if result.passed else "failed",
        exit_code=result.exit_code,
        metrics={"checks": [c.model_dump() for c in checks]},
    ))
    return VerifyResponse(
        run_id=run_id,
        scenario=result.scenario,
        passed=result.passed,
        exit_code=result.exit_code,
        checks=checks,
    )


@router.post("/sweeps", response_model=RunResponse)
async def create_sweep(
    request: SweepRequest,
    db: AsyncSession = Depends(get_db)
):
    """
    Horizon sweep of the accumulated closed-loop cost.
    """
    run_id = str(uuid.uuid4())
    config = _run_config(request, run_id)
    try:
        result = await run_in_threadpool(run_service.sweep, config, request.horizons, request.k)
    except ConfigurationError as e:
        raise HTTPException(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(e))
    except CoopMpcError as e:
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=f"Error in sweep: {str(e)}")
    run = SimulationRun(
        run_id=run_id,
        command="sweep",
        scenario=result.scenario,
        steps=request.steps,
        status="completed" if result.exit_code == 0 else "failed",
        exit_code=result.exit_code,
        output_dir=str(result.path.parent),
        metrics=plain({"rows": [r.to_row() for r in result.rows], "monotone": result.monotone}),
    )
    return _response(await _store(db, run))
