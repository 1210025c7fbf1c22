"""Configuration management using pydantic-settings."""

import os

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings managed by pydantic-settings."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging configuration
    log_level: str = Field(
        default="INFO",
        description="Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)",
        alias="LOG_LEVEL",
    )

    # Execution
    default_threads: int = Field(
        default_factory=lambda: os.cpu_count() or 1,
        ge=1,
        description="Worker pool size when --threads is not given",
        alias="DEFAULT_THREADS",
    )

    cache_dir: str = Field(
        default=".sop-cache",
        description="Directory holding oracle JSON sidecar files",
        alias="CACHE_DIR",
    )

    # Numerical tolerances
    svd_dense_max_dim: int = Field(
        default=512,
        description="Largest dimension for which the spectral function uses a full SVD",
        alias="SVD_DENSE_MAX_DIM",
    )

    exact_residual_max_dim: int = Field(
        default=256,
        description="Largest pencil dimension whose eigenvalue residuals are exact sigma values",
        alias="EXACT_RESIDUAL_MAX_DIM",
    )

    residual_rtol: float = Field(
        default=1e-8,
        description="Eigenvalue residual tolerance relative to the pencil scale",
        alias="RESIDUAL_RTOL",
    )

    hermitian_rtol: float = Field(
        default=1e-10,
        description="Allowed Hermitian defect relative to the matrix scale",
        alias="HERMITIAN_RTOL",
    )

    quadrature_max_doublings: int = Field(
        default=4,
        description="How many times Gauss-Hermite node counts may double before failing",
        alias="QUADRATURE_MAX_DOUBLINGS",
    )

    output_digits: int = Field(
        default=17,
        ge=1,
        le=17,
        description="Significant digits written to CSV files",
        alias="OUTPUT_DIGITS",
    )


# Singleton instance
_settings: Settings | None = None


def get_settings() -> Settings:
    """Get the singleton settings instance."""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reset_settings() -> None:
    """Drop the cached settings so the next call re-reads the environment."""
    global _settings
    _settings = None
