"""
Shared pieces of the ergodicity experiments: observables, start spreads and
seed bookkeeping.
"""

from typing import Callable, List, NamedTuple, Sequence
import logging

import numpy as np
from scipy.special import expit

from core.rng import PROBE, derive_seeds, generator

logger = logging.getLogger(__name__)

# Seed ranges handed out by fresh_seeds never overlap those of derive_seeds(seed, N)
# for N below this.
SEED_STRIDE = 2**32


class Observable(NamedTuple):
    """Named test function on points of shape (N, d)"""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]


class ZObservable(NamedTuple):
    """Named test function on enlarged samples (x of shape (N, d), windows of shape (N, L, K))"""

    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]


def fresh_seeds(seed: int, count: int, salt: int) -> np.ndarray:
    """Per-point seeds disjoint from derive_seeds(seed, count) and from other salts"""
    return derive_seeds(seed, count, start=(int(salt) + 1) * SEED_STRIDE)


def sigmoid_observables(dim: int, max_coords: int = 3) -> List[Observable]:
    """Bounded coordinate observables: logistic of x_i and of 2 x_i - 1"""
    obs = []
    for i in range(min(dim, max_coords)):
        obs.append(Observable(f"sigmoid(x{i})", lambda x, i=i: expit(x[:, i])))
        obs.append(Observable(f"sigmoid(2x{i}-1)", lambda x, i=i: expit(2.0 * x[:, i] - 1.0)))
    return obs


def probe_directions(dim: int, n_random: int, seed: int) -> np.ndarray:
    """
    Unit directions: the 2*dim signed basis vectors followed by n_random
    uniform directions drawn from the PROBE domain.
    """
    eye = np.eye(dim)
    dirs = [eye, -eye]
    if n_random > 0:
        raw = generator(seed, PROBE, stream_id=2).standard_normal((n_random, dim))
        dirs.append(raw / np.linalg.norm(raw, axis=1, keepdims=True))
    return np.vstack(dirs)


def start_spread(dim: int, rho1: float, seed: int, count: int = 8) -> np.ndarray:
    """
    Initial conditions for pullback ensembles: `count` points on the sphere
    of radius rho1 followed by the origin.

    Returns:
        Array of shape (count + 1, dim)
    """
    if dim == 1:
        signs = np.where(np.arange(count) % 2 == 0, 1.0, -1.0)
        sphere = (rho1 * signs)[:, None]
    else:
        raw = generator(seed, PROBE).standard_normal((count, dim))
        sphere = rho1 * raw / np.linalg.norm(raw, axis=1, keepdims=True)
    return np.vstack([sphere, np.zeros((1, dim))])


def assign_starts(starts: np.ndarray, n: int) -> np.ndarray:
    """Round-robin assignment of n points to the given starts"""
    return starts[np.arange(n) % len(starts)].copy()


def checked_grid(values: Sequence[float], name: str, increasing: bool = True) -> np.ndarray:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError(f"{name} must not be empty")
    steps = np.diff(v)
    if increasing and np.any(steps <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    if not increasing and np.any(steps >= 0):
        raise ValueError(f"{name} must be strictly decreasing")
    return v
