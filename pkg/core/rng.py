"""
Counter-based random streams for the lab.

Every stream is a numpy Philox generator keyed by (seed, domain, stream_id).
The standard normal used at absolute grid step k, component j, is a pure
function of that key and of k, so any window of increments can be replayed
bit-exactly, whatever happened before it.
"""

from functools import lru_cache
from typing import Iterable, Optional
import logging

import numpy as np
from scipy.special import ndtri

logger = logging.getLogger(__name__)

# Noise domains. Streams from different domains never share a key.
DRIVING = 1  # V, the Wiener process behind the OU driver
WIENER = 2  # W, the white noise of the state equation
STATIONARY = 3  # initial draws from the stationary OU law
COUPLING = 4  # uniforms and proposals of coupling attempts
PROBE = 5  # random probe directions

DOMAIN_NAMES = {
    DRIVING: "driving",
    WIENER: "wiener",
    STATIONARY: "stationary",
    COUPLING: "coupling",
    PROBE: "probe",
}

# Absolute step indices may be negative (pullback starts); shift them into
# the unsigned counter range.
STEP_BIAS = 2**40

_SEED_MASK = (1 << 63) - 1
_TWO_POW_53 = 2.0**-53


@lru_cache(maxsize=65536)
def stream_key(seed: int, domain: int, stream_id: int = 0) -> tuple:
    """Derive the 128-bit Philox key of a stream."""
    seq = np.random.SeedSequence([int(seed) & _SEED_MASK, int(domain), int(stream_id)])
    state = seq.generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


def _raw_block(key: tuple, start: int, count: int) -> np.ndarray:
    """Philox outputs number start .. start+count-1 of the keyed sequence."""
    block, offset = divmod(start, 4)
    bit_generator = np.random.Philox(
        counter=block, key=np.array(key, dtype=np.uint64)
    )
    raw = bit_generator.random_raw(offset + count)
    return raw[offset:]


def _to_normals(raw: np.ndarray) -> np.ndarray:
    uniforms = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_POW_53
    return ndtri(uniforms)


class NoiseStream:
    """
    Replayable source of standard normal increments.

    Attributes:
        seed: 64-bit user seed
        domain: noise domain (DRIVING, WIENER, ...)
        dim: number of components per step
        stream_id: sub-stream index inside (seed, domain)
        step_offset: added to every absolute step index; shifting a stream by
            m steps reproduces the increments of the original at step k + m
    """

    def __init__(
        self,
        seed: int,
        domain: int,
        dim: int,
        stream_id: int = 0,
        step_offset: int = 0,
    ):
        if dim < 1:
            raise ValueError(f"noise dimension must be positive, got {dim}")
        self.seed = int(seed)
        self.domain = int(domain)
        self.dim = int(dim)
        self.stream_id = int(stream_id)
        self.step_offset = int(step_offset)
        self._key = stream_key(self.seed, self.domain, self.stream_id)

    def __repr__(self):
        name = DOMAIN_NAMES.get(self.domain, str(self.domain))
        return (
            f"<NoiseStream {name} seed={self.seed} id={self.stream_id} "
            f"dim={self.dim} offset={self.step_offset}>"
        )

    def shifted(self, steps: int) -> "NoiseStream":
        """Same stream with its step index advanced by `steps`."""
        return NoiseStream(
            self.seed, self.domain, self.dim, self.stream_id, self.step_offset + steps
        )

    def normals(self, k0: int, k1: int) -> np.ndarray:
        """
        Standard normals for absolute steps k0 .. k1-1.

        Returns:
            Array of shape (k1 - k0, dim)
        """
        n_steps = k1 - k0
        if n_steps <= 0:
            return np.zeros((0, self.dim))
        first = k0 + self.step_offset + STEP_BIAS
        if first < 0:
            raise ValueError(f"step index {k0} is below the supported range")
        raw = _raw_block(self._key, first * self.dim, n_steps * self.dim)
        return _to_normals(raw).reshape(n_steps, self.dim)


def stream_normals(
    seeds: Iterable[int],
    domain: int,
    dim: int,
    k0: int,
    k1: int,
    step_offset: int = 0,
) -> np.ndarray:
    """
    Increments of many per-point streams stacked along the first axis.

    Returns:
        Array of shape (len(seeds), k1 - k0, dim)
    """
    blocks = [
        NoiseStream(seed, domain, dim, step_offset=step_offset).normals(k0, k1)
        for seed in seeds
    ]
    if not blocks:
        return np.zeros((0, max(k1 - k0, 0), dim))
    return np.stack(blocks)


def generator(seed: int, domain: int, stream_id: int = 0) -> np.random.Generator:
    """Sequential numpy Generator on a keyed Philox stream."""
    key = stream_key(seed, domain, stream_id)
    return np.random.Generator(np.random.Philox(key=np.array(key, dtype=np.uint64)))


def derive_seeds(base: int, count: int, start: int = 0) -> np.ndarray:
    """Per-point seeds base+start, ..., base+start+count-1 (kept in 63 bits)."""
    return (np.arange(start, start + count, dtype=np.int64) + int(base)) & _SEED_MASK


def check_disjoint(driving_seed: Optional[int], wiener_seed: Optional[int]) -> None:
    """Driving and Wiener seeds must differ; the domains keep their keys apart."""
    if driving_seed is not None and driving_seed == wiener_seed:
        raise ValueError("driving and wiener seeds must be distinct")
