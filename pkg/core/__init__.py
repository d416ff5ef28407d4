# Core package - Infrastructure components
from .pool import WorkerPool, close_worker_pool, get_worker_pool
from .rng import (
    COUPLING,
    DRIVING,
    PROBE,
    STATIONARY,
    WIENER,
    NoiseStream,
    check_disjoint,
    derive_seeds,
    generator,
    stream_normals,
)

__all__ = [
    # Worker pool
    "WorkerPool",
    "get_worker_pool",
    "close_worker_pool",
    # Random streams
    "NoiseStream",
    "stream_normals",
    "generator",
    "derive_seeds",
    "check_disjoint",
    "DRIVING",
    "WIENER",
    "STATIONARY",
    "COUPLING",
    "PROBE",
]
