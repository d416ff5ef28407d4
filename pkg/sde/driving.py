"""
Ornstein-Uhlenbeck driving noise and its history process.

The driver Y is a diagonal OU process sampled on a uniform time grid. A
DrivingPath stores one realization on a finite past window ending at
t_origin; advancing the path appends exact OU transitions and drops the
oldest samples, which is the finite-window version of H(t, s, h).

Grid times are addressed by absolute step index k = round(t / dt). The V
increment used between steps k and k+1 is the normal at step k of the
path's DRIVING stream, so every extension of the same realization replays
the same increments.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from config import settings
from core.rng import DRIVING, STATIONARY, NoiseStream, stream_normals

logger = logging.getLogger(__name__)

GRID_TOLERANCE = 1e-9


class CoverageError(Exception):
    """Raised when a driving path does not cover the requested time range"""

    def __init__(self, start: float, stop: float, covered: Tuple[float, float]):
        self.start = start
        self.stop = stop
        self.covered = covered
        super().__init__(
            f"driving path covers [{covered[0]:g}, {covered[1]:g}], "
            f"requested [{start:g}, {stop:g}]"
        )


def grid_steps(t: float, dt: float, name: str = "time") -> int:
    """
    Number of grid steps in `t`.

    Raises:
        ValueError: if t is not an integer multiple of dt
    """
    k = int(round(t / dt))
    if abs(k * dt - t) > GRID_TOLERANCE * max(1.0, abs(t)):
        raise ValueError(f"{name}={t:g} is not a multiple of dt={dt:g}")
    return k


class OUSpec(BaseModel):
    """Diagonal OU driver dY = BY dt + diag(noise_scale) dV"""

    model_config = ConfigDict(frozen=True)

    dim: int
    drift_eigs: List[float]
    noise_scale: List[float]

    @field_validator("dim")
    @classmethod
    def _positive_dim(cls, v: int) -> int:
        if v < 1:
            raise ValueError("dim must be a positive integer")
        return v

    @field_validator("drift_eigs")
    @classmethod
    def _negative_drift(cls, v: List[float]) -> List[float]:
        if any(not (b < 0 and math.isfinite(b)) for b in v):
            raise ValueError("every drift eigenvalue must be finite and strictly negative")
        return v

    @field_validator("noise_scale")
    @classmethod
    def _nonneg_scale(cls, v: List[float]) -> List[float]:
        if any(not (s >= 0 and math.isfinite(s)) for s in v):
            raise ValueError("noise scales must be finite and nonnegative")
        return v

    @model_validator(mode="after")
    def _matching_lengths(self) -> "OUSpec":
        if len(self.drift_eigs) != self.dim or len(self.noise_scale) != self.dim:
            raise ValueError(
                f"drift_eigs and noise_scale must have length dim={self.dim}"
            )
        return self

    @classmethod
    def uniform(cls, dim: int, drift: float = -1.0, scale: float = 1.0) -> "OUSpec":
        """Same drift and scale on every mode"""
        return cls(dim=dim, drift_eigs=[drift] * dim, noise_scale=[scale] * dim)

    @property
    def drift(self) -> np.ndarray:
        return np.asarray(self.drift_eigs, dtype=float)

    @property
    def scale(self) -> np.ndarray:
        return np.asarray(self.noise_scale, dtype=float)

    @property
    def stationary_variance(self) -> np.ndarray:
        """Per-mode variance noise_scale^2 / (-2 b)"""
        return self.scale**2 / (-2.0 * self.drift)

    def transition(self, dt: float) -> Tuple[np.ndarray, np.ndarray]:
        """Per-mode (decay, std) of the exact transition over dt"""
        decay = np.exp(self.drift * dt)
        std = np.sqrt(self.scale**2 * (-np.expm1(2.0 * self.drift * dt)) / (-2.0 * self.drift))
        return decay, std

    def default_history(self, dt: float) -> float:
        """History length covering DEFAULT_HISTORY_DECAYS slowest decay times, on the grid"""
        slowest = float(np.min(np.abs(self.drift)))
        steps = math.ceil(settings.DEFAULT_HISTORY_DECAYS / slowest / dt)
        return steps * dt


@dataclass(frozen=True)
class HistoryWindow:
    """
    Samples of the driver at theta = -t_hist, ..., -dt, 0.

    Attributes:
        t_hist: window length
        dt: grid step
        samples: array of shape (t_hist/dt + 1, K); samples[-1] is h(0)
    """

    t_hist: float
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        if self.dt <= 0 or self.t_hist <= 0:
            raise ValueError("t_hist and dt must be positive")
        expected = grid_steps(self.t_hist, self.dt, "t_hist") + 1
        if self.samples.ndim != 2 or self.samples.shape[0] != expected:
            raise ValueError(
                f"history window needs {expected} samples, got shape {self.samples.shape}"
            )

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def head(self) -> np.ndarray:
        """h(0)"""
        return self.samples[-1]

    def value(self, theta: float) -> np.ndarray:
        """h(theta) for a grid point theta in [-t_hist, 0]"""
        k = grid_steps(theta, self.dt, "theta")
        if k > 0 or -k >= self.length:
            raise ValueError(f"theta={theta:g} outside [-{self.t_hist:g}, 0]")
        return self.samples[self.length - 1 + k]


@dataclass(frozen=True)
class DrivingPath:
    """
    One realization of the driver on a finite window.

    Attributes:
        spec: OU specification
        window: samples up to absolute time t_origin
        seed: seed of the DRIVING stream that generates extensions
        t_origin: absolute time of theta = 0
        step_offset: offset applied to the DRIVING stream; shifted paths keep
            replaying the increments of the realization they came from
    """

    spec: OUSpec
    window: HistoryWindow
    seed: int
    t_origin: float = 0.0
    step_offset: int = 0

    def __post_init__(self):
        if self.window.dim != self.spec.dim:
            raise ValueError("window dimension does not match the OU spec")
        grid_steps(self.t_origin, self.window.dt, "t_origin")

    @property
    def dt(self) -> float:
        return self.window.dt

    @property
    def samples(self) -> np.ndarray:
        return self.window.samples

    @property
    def k_origin(self) -> int:
        return int(round(self.t_origin / self.dt))

    @property
    def k_first(self) -> int:
        return self.k_origin - self.window.length + 1

    @property
    def t_start(self) -> float:
        return self.k_first * self.dt

    def noise_stream(self) -> NoiseStream:
        """DRIVING stream of this realization"""
        return NoiseStream(self.seed, DRIVING, self.spec.dim, step_offset=self.step_offset)

    def covers(self, s: float, t: float) -> bool:
        k_s = int(round(s / self.dt))
        k_t = int(round(t / self.dt))
        return self.k_first <= k_s and k_t <= self.k_origin

    def require(self, s: float, t: float) -> None:
        if not self.covers(s, t):
            raise CoverageError(s, t, (self.t_start, self.t_origin))

    def grid_values(self, k0: int, k1: int) -> np.ndarray:
        """Samples at absolute steps k0 .. k1-1, shape (k1 - k0, K)"""
        if k0 < self.k_first or k1 - 1 > self.k_origin:
            raise CoverageError(k0 * self.dt, (k1 - 1) * self.dt, (self.t_start, self.t_origin))
        return self.samples[k0 - self.k_first:k1 - self.k_first]

    def value_at(self, t: float) -> np.ndarray:
        k = grid_steps(t, self.dt, "t")
        return self.grid_values(k, k + 1)[0]

    def window_at(self, t: float, t_hist: float) -> HistoryWindow:
        """H(t) restricted to [-t_hist, 0], sharing memory with this path"""
        k = grid_steps(t, self.dt, "t")
        m = grid_steps(t_hist, self.dt, "t_hist")
        return HistoryWindow(t_hist, self.dt, self.grid_values(k - m, k + 1))

    def shifted(self, delta: float) -> "DrivingPath":
        """Realization Y'(r) = Y(r + delta)"""
        m = grid_steps(delta, self.dt, "delta")
        return DrivingPath(
            spec=self.spec,
            window=self.window,
            seed=self.seed,
            t_origin=(self.k_origin - m) * self.dt,
            step_offset=self.step_offset + m,
        )

    def to_json(self) -> dict:
        return {
            "spec": self.spec.model_dump(),
            "t_origin": self.t_origin,
            "dt": self.dt,
            "seed": self.seed,
            "step_offset": self.step_offset,
            "samples": self.samples.tolist(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "DrivingPath":
        samples = np.asarray(data["samples"], dtype=float)
        dt = float(data["dt"])
        window = HistoryWindow((samples.shape[0] - 1) * dt, dt, samples)
        return cls(
            spec=OUSpec(**data["spec"]),
            window=window,
            seed=int(data.get("seed", 0)),
            t_origin=float(data["t_origin"]),
            step_offset=int(data.get("step_offset", 0)),
        )


# ======================
# Exact OU transitions
# ======================

def ou_step(spec: OUSpec, y: np.ndarray, dt: float, noise: np.ndarray) -> np.ndarray:
    """Exact OU transition over dt driven by standard normals `noise`"""
    if dt <= 0:
        raise ValueError("dt must be positive")
    decay, std = spec.transition(dt)
    return decay * y + std * noise


def ou_recursion(
    y0: np.ndarray, normals: np.ndarray, decay: np.ndarray, std: np.ndarray
) -> np.ndarray:
    """
    Iterate the exact transition along the step axis.

    Args:
        y0: start values, shape (..., K)
        normals: shape (..., steps, K)

    Returns:
        Values after each step, shape (..., steps, K)
    """
    out = np.empty(normals.shape)
    y = np.asarray(y0, dtype=float)
    for j in range(normals.shape[-2]):
        y = decay * y + std * normals[..., j, :]
        out[..., j, :] = y
    return out


def sample_stationary(spec: OUSpec, seed: int, size: Optional[int] = None) -> np.ndarray:
    """
    Draw from the stationary law N(0, diag(noise_scale^2 / (-2 b))).

    Returns:
        Shape (K,) when size is None, else (size, K)
    """
    count = 1 if size is None else int(size)
    normals = NoiseStream(seed, STATIONARY, spec.dim).normals(0, count)
    draws = np.sqrt(spec.stationary_variance) * normals
    return draws[0] if size is None else draws


def make_stationary_history(
    spec: OUSpec,
    t_hist: float,
    dt: float,
    seed: int,
    t_origin: float = 0.0,
) -> DrivingPath:
    """Stationary window on [t_origin - t_hist, t_origin]"""
    m = grid_steps(t_hist, dt, "t_hist")
    k_origin = grid_steps(t_origin, dt, "t_origin")
    y0 = sample_stationary(spec, seed)
    stream = NoiseStream(seed, DRIVING, spec.dim)
    decay, std = spec.transition(dt)
    values = ou_recursion(y0, stream.normals(k_origin - m, k_origin), decay, std)
    samples = np.vstack([y0[None, :], values])
    return DrivingPath(spec, HistoryWindow(t_hist, dt, samples), int(seed), k_origin * dt)


def extend_path(
    path: DrivingPath, t: float, noise_stream: Optional[NoiseStream] = None
) -> DrivingPath:
    """Append Y on (t_origin, t_origin + t], keeping the whole past"""
    m = grid_steps(t, path.dt, "t")
    if m < 0:
        raise ValueError("cannot extend a path backwards")
    if m == 0:
        return path
    stream = noise_stream or path.noise_stream()
    decay, std = path.spec.transition(path.dt)
    values = ou_recursion(
        path.window.head, stream.normals(path.k_origin, path.k_origin + m), decay, std
    )
    samples = np.vstack([path.samples, values])
    window = HistoryWindow((samples.shape[0] - 1) * path.dt, path.dt, samples)
    return DrivingPath(path.spec, window, path.seed, (path.k_origin + m) * path.dt, path.step_offset)


def advance_history(
    path: DrivingPath, t: float, noise_stream: Optional[NoiseStream] = None
) -> DrivingPath:
    """
    H(t_origin + t, t_origin, h): extend by t and drop the oldest t/dt samples.

    The window length is preserved.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    extended = extend_path(path, t, noise_stream)
    if extended is path:
        return path
    samples = extended.samples[-path.window.length:]
    window = HistoryWindow(path.window.t_hist, path.dt, samples)
    return DrivingPath(path.spec, window, path.seed, extended.t_origin, path.step_offset)


def covering_path(
    spec: OUSpec, start: float, stop: float, dt: float, seed: int
) -> DrivingPath:
    """Stationary realization covering [start, stop] with the default history before start"""
    t_hist = (stop - start) + spec.default_history(dt)
    return make_stationary_history(spec, t_hist, dt, seed, t_origin=stop)


def constant_path(
    spec: OUSpec, value: Sequence[float], start: float, stop: float, dt: float
) -> DrivingPath:
    """Deterministic path Y = value on [start, stop]"""
    m = grid_steps(stop - start, dt, "stop - start")
    samples = np.tile(np.asarray(value, dtype=float), (m + 1, 1))
    return DrivingPath(spec, HistoryWindow(m * dt, dt, samples), 0, stop)


# ======================
# Batches of histories
# ======================

def stationary_history_batch(
    spec: OUSpec,
    t_hist: float,
    dt: float,
    seeds: Sequence[int],
    k_first: int = 0,
) -> np.ndarray:
    """
    Independent stationary windows, one per seed.

    Returns:
        Array of shape (len(seeds), t_hist/dt + 1, K)
    """
    m = grid_steps(t_hist, dt, "t_hist")
    y0 = np.stack([sample_stationary(spec, seed) for seed in seeds])
    decay, std = spec.transition(dt)
    normals = stream_normals(seeds, DRIVING, spec.dim, k_first, k_first + m)
    values = ou_recursion(y0, normals, decay, std)
    return np.concatenate([y0[:, None, :], values], axis=1)


def extend_histories(
    spec: OUSpec,
    windows: np.ndarray,
    steps: int,
    dt: float,
    v_seeds: Sequence[int],
    k0: int,
    step_offset: int = 0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Advance a batch of windows by `steps` grid steps.

    Args:
        windows: shape (N, L, K), last sample at absolute step k0
        v_seeds: per-window DRIVING seeds

    Returns:
        (advanced windows of shape (N, L, K), appended values of shape (N, steps, K))
    """
    decay, std = spec.transition(dt)
    normals = stream_normals(v_seeds, DRIVING, spec.dim, k0, k0 + steps, step_offset)
    values = ou_recursion(windows[:, -1, :], normals, decay, std)
    length = windows.shape[1]
    advanced = np.concatenate([windows, values], axis=1)[:, -length:, :]
    return advanced, values
