"""
Database package initialization.
"""
from database.db import Base, get_db, init_db, close_db
from database.models import SimulationRun

__all__ = [
    "Base",
    "get_db",
    "init_db",
    "close_db",
    "SimulationRun"
]
