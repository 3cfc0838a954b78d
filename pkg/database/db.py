"""
Database configuration and connection management.
"""
import logging

from sqlalchemy.ext.asyncio import create_async_engine, AsyncSession, async_sessionmaker
from sqlalchemy.orm import declarative_base
from sqlalchemy.pool import NullPool

from config import settings

logger = logging.getLogger(__name__)


def prepare_database_url(url: str) -> str:
    """Use the async sqlite driver for plain sqlite URLs."""
    if url.startswith("sqlite://"):
        return url.replace("sqlite://", "sqlite+aiosqlite://", 1)
    return url


ASYNC_DATABASE_URL = prepare_database_url(settings.database_url)

# Create async engine for application use
async_engine = create_async_engine(
    ASYNC_DATABASE_URL,
    poolclass=NullPool,
    echo=settings.debug
)

# Session factory
AsyncSessionLocal = async_sessionmaker(
    async_engine,
    class_=AsyncSession,
    expire_on_commit=False
)

# Base class for models
Base = declarative_base()


async def get_db():
    """
    Dependency to get database session.
    """
    async with AsyncSessionLocal() as session:
        try:
            yield session
        finally:
            await session.close()


async def init_db():
    """
    Initialize database: create tables.
    """
    try:
        # Import models to register them
        from database import models  # noqa: F401

        async with async_engine.begin() as conn:
            await conn.run_sync(Base.metadata.create_all)

        logger.info(f"database tables ready at {ASYNC_DATABASE_URL}")

    except Exception as e:
        logger.error(f"error initializing database: {e}")
        raise


async def close_db():
    """
    Close database connections.
    """
    await async_engine.dispose()
