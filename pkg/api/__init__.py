# API package - experiment configs, reports and dispatch
from .models import (
    ConfigError,
    ModelConfig,
    NumericsConfig,
    SeedConfig,
    ExperimentConfig,
    ExperimentReport,
    load_experiment_config,
    parse_experiment_config,
)
from .routes import EXIT_ERROR, EXIT_PASS, EXIT_PROPERTY_FAILURE, run_experiment

__all__ = [
    # Models
    "ConfigError",
    "ModelConfig",
    "NumericsConfig",
    "SeedConfig",
    "ExperimentConfig",
    "ExperimentReport",
    "load_experiment_config",
    "parse_experiment_config",
    # Dispatch
    "EXIT_ERROR",
    "EXIT_PASS",
    "EXIT_PROPERTY_FAILURE",
    "run_experiment",
]
