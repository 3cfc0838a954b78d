"""
Main FastAPI application for the cooperative MPC engine.
"""
import logging

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from contextlib import asynccontextmanager
import uvicorn

from config import LOG_FORMAT, settings
from database.db import close_db, init_db
from api import routes

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """
    Lifecycle manager for FastAPI app.
    Initializes database on startup.
    """
    logger.info("starting cooperative MPC engine API")
    await init_db()

    yield

    await close_db()
    logger.info("shutting down")


# Initialize FastAPI app
app = FastAPI(
    title="Cooperative MPC Engine API",
    description="Distributed MPC with artificial periodic references: runs, verification and horizon sweeps",
    version="1.0.0",
    lifespan=lifespan
)

# Configure CORS
app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.cors_origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include API routes
app.include_router(routes.router, prefix="/api")


@app.get("/")
async def root():
    """Root endpoint."""
    return {
        "message": "Cooperative MPC Engine API",
        "status": "running",
        "docs": "/docs"
    }


@app.get("/health")
async def health_check():
    """Health check endpoint."""
    return {"status": "healthy"}


if __name__ == "__main__":
    logging.basicConfig(level=settings.log_level, format=LOG_FORMAT)
    uvicorn.run(
        "main:app",
        host=settings.host,
        port=settings.port,
        reload=settings.debug
    )
