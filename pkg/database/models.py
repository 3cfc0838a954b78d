"""
Database models for stored simulation runs.
"""
import uuid

from sqlalchemy import Column, String, Integer, DateTime, JSON
from sqlalchemy.sql import func

from database.db import Base


class SimulationRun(Base):
    """
    One run, verification or sweep launched through the API.
    """
    __tablename__ = "simulation_runs"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(String, unique=True, index=True, nullable=False, default=lambda: str(uuid.uuid4()))
    command = Column(String, nullable=False, default="run")  # run, verify, sweep
    scenario = Column(String, index=True, nullable=False)
    steps = Column(Integer, nullable=True)
    status = Column(String, nullable=False)  # completed, failed
    exit_code = Column(Integer, nullable=False, default=0)
    output_dir = Column(String, nullable=True)
    metrics = Column(JSON, default=dict)
    error = Column(String, nullable=True)
    created_at = Column(DateTime(timezone=True), server_default=func.now())
    updated_at = Column(DateTime(timezone=True), onupdate=func.now())
