"""Process configuration management."""
from __future__ import annotations

from functools import lru_cache
from typing import Any
import os

from pydantic import BaseModel, ConfigDict, Field, field_validator


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    return int(raw)


class Settings(BaseModel):
    """Runtime configuration loaded from environment variables."""

    model_config = ConfigDict(frozen=True)

    env: str = Field(default_factory=lambda: os.getenv("EDGESENSE_ENV", "dev"))
    log_level: str = Field(default_factory=lambda: os.getenv("EDGESENSE_LOG_LEVEL", "INFO"))
    n_jobs: int = Field(default_factory=lambda: _env_int("EDGESENSE_N_JOBS", 1))
    out_dir: str = Field(default_factory=lambda: os.getenv("EDGESENSE_OUT_DIR", "runs"))

    rank_tol: float = 1e-9
    eig_cluster_tol: float = 1e-6
    cond_limit: float = 1e12
    jordan_tol: float = 1e-8
    singular_tol: float = 1e-10
    m_threshold: float = 1e-8
    enumeration_budget: int = 2**20
    unlinked_kappa: float = 1.0 - 1e-9
    covariance_jitter: float = 1e-10

    @field_validator(
        "rank_tol",
        "eig_cluster_tol",
        "cond_limit",
        "jordan_tol",
        "singular_tol",
        "m_threshold",
        "covariance_jitter",
    )
    @classmethod
    def _validate_tolerance(cls, value: float) -> float:
        """Ensure numerical tolerances are strictly positive."""

        if not value > 0:
            raise ValueError("tolerances must be strictly positive")
        return value

    @field_validator("unlinked_kappa")
    @classmethod
    def _validate_kappa_cap(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError("unlinked_kappa must lie in (0, 1)")
        return value

    @field_validator("n_jobs")
    @classmethod
    def _validate_jobs(cls, value: int) -> int:
        if value == 0:
            raise ValueError("n_jobs must be non-zero (negative values count from the CPU total)")
        return value

    def linalg_tolerances(self) -> dict[str, Any]:
        """Return the tolerances consumed by the linear-algebra layer."""

        return {
            "rank_tol": self.rank_tol,
            "eig_cluster_tol": self.eig_cluster_tol,
            "cond_limit": self.cond_limit,
            "jordan_tol": self.jordan_tol,
            "singular_tol": self.singular_tol,
        }


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return cached process settings."""

    return Settings()


settings = get_settings()
"""Module-level settings singleton used across the package."""
