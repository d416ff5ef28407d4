# SDE package - driving noise, time stepping, measures and models
from .driving import CoverageError, DrivingPath, HistoryWindow, OUSpec
from .measures import EmpiricalMeasure, MixingFitError, PseudoMetric
from .integrator import DivergenceError, LinearModel, SemilinearModel, StepScheme

__all__ = [
    "CoverageError",
    "DivergenceError",
    "DrivingPath",
    "EmpiricalMeasure",
    "HistoryWindow",
    "LinearModel",
    "MixingFitError",
    "OUSpec",
    "PseudoMetric",
    "SemilinearModel",
    "StepScheme",
]
