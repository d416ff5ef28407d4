# Tasks package - experiment runners
from .experiments import (
    EXPERIMENT_RUNNERS,
    ExperimentOutcome,
    UnsupportedModelError,
    run_experiment,
)

__all__ = [
    "EXPERIMENT_RUNNERS",
    "ExperimentOutcome",
    "UnsupportedModelError",
    "run_experiment",
]
