"""
Configuration module for the cooperative MPC engine.
"""
import os
from pydantic import Field, computed_field
from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import List
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        case_sensitive=False,
        extra="ignore"
    )

    # Output
    output_dir: str = Field(default="./runs", description="Default directory of run artifacts")
    log_level: str = Field(default="INFO")

    # Database
    database_url: str = Field(default=os.getenv("DATABASE_URL", "sqlite+aiosqlite:///./runs.db"))

    # Server
    host: str = Field(default="0.0.0.0")
    port: int = Field(default=8000)
    debug: bool = Field(default=False)

    # CORS - stored as string, parsed to list
    cors_origins_str: str = Field(default="http://localhost:3000,http://localhost:5173", alias="cors_origins")

    @computed_field  # type: ignore[misc]
    @property
    def cors_origins(self) -> List[str]:
        """Parse CORS origins from comma-separated string."""
        return [origin.strip() for origin in self.cors_origins_str.split(',') if origin.strip()]

    # Diagnostics
    default_seed: int = Field(default=0)
    feasibility_tolerance: float = Field(default=1e-6, gt=0)
    lyapunov_tolerance: float = Field(default=1e-5, gt=0)
    sweep_tolerance: float = Field(default=0.05, ge=0)
    oracle_tolerance: float = Field(default=1e-5, gt=0)

    # Plots
    plot_dpi: int = Field(default=100, ge=10)


# Global settings instance
settings = Settings()
