"""
Centralized configuration for the two-noise ergodicity lab
All process-wide numerical defaults and runtime settings are defined here
"""

import os
from pydantic_settings import BaseSettings
from pydantic import Field


class Settings(BaseSettings):
    """
    Lab settings loaded from environment variables.
    Provides centralized configuration with validation and defaults.
    """

    # ======================
    # Logging Configuration
    # ======================
    LOG_LEVEL: str = Field(
        default="INFO",
        description="Logging level"
    )

    # ======================
    # Worker Configuration
    # ======================
    WORKERS: int = Field(
        default=0,
        description="Worker processes for ensemble evolution (0 = machine parallelism)"
    )
    MIN_POINTS_PER_CHUNK: int = Field(
        default=64,
        description="Smallest ensemble chunk handed to a worker process"
    )

    # ======================
    # Integrator Configuration
    # ======================
    BLOWUP_BOUND: float = Field(
        default=1e6,
        description="H-norm above which a trajectory is declared divergent"
    )
    NOISE_BLOCK_STEPS: int = Field(
        default=256,
        description="Time steps of noise generated per block and per stream"
    )

    # ======================
    # Driving Noise Configuration
    # ======================
    DEFAULT_HISTORY_DECAYS: float = Field(
        default=10.0,
        description="Default history window in units of the slowest OU decay time"
    )

    # ======================
    # Measure Estimators
    # ======================
    EXACT_ASSIGNMENT_LIMIT: int = Field(
        default=512,
        description="Largest cloud size solved by exact assignment"
    )
    TV_MAX_BINS: int = Field(
        default=64,
        description="Histogram bins per axis for total variation estimates"
    )
    TV_OUTSIDE_MASS_WARN: float = Field(
        default=0.01,
        description="Mass fraction outside the binning range that triggers a warning"
    )
    SINKHORN_REG: float = Field(
        default=0.01,
        description="Entropic regularization for large transport problems"
    )
    SINKHORN_MAX_ITER: int = Field(
        default=2000,
        description="Iteration cap for the entropic solver"
    )

    # ======================
    # Ergodicity Experiments
    # ======================
    K0_SEARCH_CAP: int = Field(
        default=1000,
        description="Maximum number of T-periods scanned by the small-ball search"
    )
    FLOW_PASS_FRACTION: float = Field(
        default=0.95,
        description="Fraction of (s, t, observable) triples that must agree"
    )

    # ======================
    # Output Configuration
    # ======================
    OUTPUT_DIR: str = Field(
        default="results",
        description="Default directory for experiment outputs"
    )

    @property
    def worker_count(self) -> int:
        """Resolve WORKERS, mapping 0 to the machine's parallelism"""
        return self.WORKERS if self.WORKERS > 0 else (os.cpu_count() or 1)

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        case_sensitive = True
        extra = "ignore"  # Allow extra env vars in .env file


# Global settings instance
settings = Settings()


# ======================
# Convenience Functions
# ======================

def get_log_level() -> str:
    """Get the configured logging level"""
    return settings.LOG_LEVEL


def get_worker_count() -> int:
    """Get the resolved number of worker processes"""
    return settings.worker_count


def get_blowup_bound() -> float:
    """Get the divergence guard for trajectories"""
    return settings.BLOWUP_BOUND


def get_output_dir() -> str:
    """Get the default output directory"""
    return settings.OUTPUT_DIR
