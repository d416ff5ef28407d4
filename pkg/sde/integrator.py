"""
Time stepping for dX = (AX + b(X) + g(X, Y)) dt + sigma(X, Y) dW in Galerkin
coordinates, with Y read from a frozen driving realization.

A is diagonal. Every trajectory owns a WIENER stream; the increment of step k
(from time k*dt to (k+1)*dt) is the normal at absolute step k, so splitting an
integration at any grid time reproduces the one-shot result bit-exactly.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Literal, Optional, Sequence, Tuple
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config import get_blowup_bound, settings
from core.pool import WorkerPool
from core.rng import PROBE, WIENER, derive_seeds, generator, stream_normals
from sde.driving import DrivingPath, OUSpec, extend_histories, grid_steps
from sde.measures import EmpiricalMeasure

logger = logging.getLogger(__name__)


class DivergenceError(Exception):
    """Raised when a trajectory leaves the ball of radius BLOWUP_BOUND"""

    def __init__(self, step: int, time: float, index: int, norm: float):
        self.step = step
        self.time = time
        self.index = index
        self.norm = norm
        super().__init__(
            f"trajectory {index} diverged at step {step} (t={time:g}): |x|={norm:.3g}"
        )

    def __reduce__(self):
        # rebuilt from the fields when raised inside a worker process
        return type(self), (self.step, self.time, self.index, self.norm)


# ======================
# Models
# ======================

class SemilinearModel(ABC):
    """
    Abstract model (A, b, g, sigma) in real Galerkin coordinates.

    Subclasses work on batches: x has shape (N, dim), y has shape (N, K) or (K,).
    """

    dim: int
    driving_dim: int
    a_eigs: np.ndarray
    # "diagonal": diffusion returns per-coordinate scales; "matrix": (..., dim, dim)
    diffusion_kind: str = "diagonal"
    # sigma does not depend on (x, y)
    additive: bool = False

    @abstractmethod
    def nonlinearity(self, x: np.ndarray) -> np.ndarray:
        """b(x)"""

    @abstractmethod
    def coupling(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """g(x, y)"""

    @abstractmethod
    def diffusion(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """sigma(x, y)"""

    @property
    @abstractmethod
    def kappa3(self) -> float:
        """Constant of the growth function h(r) = kappa3 (1 + r)"""

    def growth_bound(self, r):
        """h(r) bounding |g(x, y)| and ||sigma(x, y)|| for |y| = r"""
        return self.kappa3 * (1.0 + np.asarray(r))

    @property
    def lambda1(self) -> float:
        """Poincare constant -max a_eig"""
        return float(-np.max(self.a_eigs))

    def dissipation(self, x: np.ndarray) -> np.ndarray:
        """-(Ax, x) per point"""
        return np.sum(-self.a_eigs * x**2, axis=-1)


class LinearModel(SemilinearModel):
    """
    dX = (a X + G Y) dt + diag(sigma) dW with diagonal a.

    The scalar instance a=-1, G=1, sigma=1 driven by the unit OU is the
    closed-form example checked by sde.oracle.
    """

    additive = True

    def __init__(self, a_eigs, gain, sigma):
        self.a_eigs = np.atleast_1d(np.asarray(a_eigs, dtype=float))
        self.dim = self.a_eigs.shape[0]
        gain = np.asarray(gain, dtype=float)
        if gain.ndim < 2:
            gain = np.broadcast_to(np.atleast_1d(gain), (self.dim,))
            gain = np.diag(gain)
        self.gain = gain
        self.driving_dim = gain.shape[1]
        self.sigma = np.broadcast_to(np.atleast_1d(np.asarray(sigma, dtype=float)), (self.dim,)).copy()
        if np.any(self.a_eigs > 0):
            raise ValueError("a_eigs must be nonpositive")

    def __repr__(self):
        return f"<LinearModel dim={self.dim} K={self.driving_dim}>"

    @classmethod
    def scalar(cls, a: float = -1.0, gain: float = 1.0, sigma: float = 1.0) -> "LinearModel":
        return cls([a], [[gain]], [sigma])

    def nonlinearity(self, x):
        return np.zeros_like(x)

    def coupling(self, x, y):
        return np.broadcast_to(np.asarray(y) @ self.gain.T, np.shape(x))

    def diffusion(self, x, y):
        return self.sigma

    @property
    def kappa3(self) -> float:
        return float(max(np.linalg.norm(self.gain, 2), np.linalg.norm(self.sigma)))


def growth_probe(model: SemilinearModel, n_probes: int, seed: int, scale: float = 10.0) -> dict:
    """
    Randomized check of |g(x,y)| <= h(|y|) and ||sigma(x,y)|| <= h(|y|).

    Returns:
        Maximal ratios over the probes; both must stay <= 1
    """
    rng = generator(seed, PROBE, stream_id=1)
    x = scale * rng.standard_normal((n_probes, model.dim))
    y = scale * rng.standard_normal((n_probes, model.driving_dim)) * rng.uniform(0, 1, (n_probes, 1))
    h = model.growth_bound(np.linalg.norm(y, axis=1))
    g_norm = np.linalg.norm(model.coupling(x, y), axis=1)
    sig = np.asarray(model.diffusion(x, y))
    shape = (n_probes, model.dim) if model.diffusion_kind == "diagonal" else (n_probes, model.dim, model.dim)
    sig = np.broadcast_to(sig, shape).reshape(n_probes, -1)
    # Hilbert-Schmidt norm
    sig_norm = np.sqrt(np.sum(sig**2, axis=1))
    return {
        "n_probes": n_probes,
        "max_coupling_ratio": float(np.max(g_norm / h)),
        "max_diffusion_ratio": float(np.max(sig_norm / h)),
    }


# ======================
# Schemes
# ======================

class StepScheme(BaseModel):
    """Fixed time step and scheme kind"""

    model_config = ConfigDict(frozen=True)

    dt: float = Field(gt=0)
    kind: Literal["exponential-euler", "euler-maruyama"] = "exponential-euler"


class Stepper:
    """One-step maps of a scheme for a given model"""

    def __init__(self, model: SemilinearModel, scheme: StepScheme):
        self.model = model
        self.scheme = scheme
        dt = scheme.dt
        a = model.a_eigs
        self.exponential = scheme.kind == "exponential-euler"
        if self.exponential:
            zero = a == 0
            safe = np.where(zero, -1.0, a)
            self.decay = np.exp(a * dt)
            self.phi = np.where(zero, dt, np.expm1(safe * dt) / safe)
            self.q = np.where(zero, np.sqrt(dt), np.sqrt(np.expm1(2.0 * safe * dt) / (2.0 * safe)))
        else:
            self.q = np.full_like(a, np.sqrt(dt))

    def mean(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Deterministic part of one step"""
        force = self.model.nonlinearity(x) + self.model.coupling(x, y)
        if self.exponential:
            return self.decay * x + self.phi * force
        return x + self.scheme.dt * (self.model.a_eigs * x + force)

    def autonomous(self, x: np.ndarray) -> np.ndarray:
        """One step of dX/dt = AX + b(X)"""
        force = self.model.nonlinearity(x)
        if self.exponential:
            return self.decay * x + self.phi * force
        return x + self.scheme.dt * (self.model.a_eigs * x + force)

    def std(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Per-coordinate noise std of one step (diagonal diffusion)"""
        if self.model.diffusion_kind != "diagonal":
            raise ValueError("one-step std requires a diagonal diffusion")
        return np.broadcast_to(self.q * np.abs(self.model.diffusion(x, y)), np.shape(x))

    def noise(self, x: np.ndarray, y: np.ndarray, xi: np.ndarray) -> np.ndarray:
        sig = self.model.diffusion(x, y)
        if self.model.diffusion_kind == "diagonal":
            return self.q * sig * xi
        return self.q * np.einsum("...ij,...j->...i", sig, xi)

    def step(self, x: np.ndarray, y: np.ndarray, xi: np.ndarray) -> np.ndarray:
        return self.mean(x, y) + self.noise(x, y, xi)


class NoiseBuffer:
    """
    Per-point WIENER normals served one step at a time.

    Normals are fetched in aligned blocks of NOISE_BLOCK_STEPS steps.
    """

    def __init__(
        self,
        seeds: Sequence[int],
        dim: int,
        step_offset: int = 0,
        domain: int = WIENER,
        block: int = settings.NOISE_BLOCK_STEPS,
    ):
        self.seeds = np.asarray(seeds)
        self.dim = dim
        self.step_offset = step_offset
        self.domain = domain
        self.block = max(1, int(block))
        self._start: Optional[int] = None
        self._normals: Optional[np.ndarray] = None

    def at(self, k: int) -> np.ndarray:
        """Normals of absolute step k, shape (N, dim)"""
        start = (k // self.block) * self.block
        if start != self._start:
            self._normals = stream_normals(
                self.seeds, self.domain, self.dim, start, start + self.block, self.step_offset
            )
            self._start = start
        return self._normals[:, k - start, :]


def deterministic_step(model: SemilinearModel, scheme: StepScheme, x, y) -> np.ndarray:
    """Mean of the one-step transition from x under driver value y"""
    return Stepper(model, scheme).mean(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def step_std(model: SemilinearModel, scheme: StepScheme, x, y) -> np.ndarray:
    """Per-coordinate std of the one-step transition (additive diagonal noise)"""
    return Stepper(model, scheme).std(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


# ======================
# Engine
# ======================

def check_bounded(x: np.ndarray, step: int, dt: float, index_offset: int) -> None:
    norms2 = np.einsum("ij,ij->i", x, x)
    bound = get_blowup_bound()
    bad = ~(norms2 <= bound * bound)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DivergenceError(step, step * dt, index_offset + i, float(np.sqrt(norms2[i])))


def run_steps(
    stepper: Stepper,
    x: np.ndarray,
    k0: int,
    ybar: np.ndarray,
    buffer: NoiseBuffer,
    index_offset: int = 0,
    record_every: int = 0,
    on_record: Optional[Callable[[int, np.ndarray], None]] = None,
) -> np.ndarray:
    """
    Advance a batch of points by ybar.shape[-2] steps starting at absolute step k0.

    Args:
        ybar: left-point driver values, (n_steps, K) shared or (N, n_steps, K) per point
        record_every: call on_record(k, x) every this many steps (0 disables)
    """
    per_point = ybar.ndim == 3
    n_steps = ybar.shape[-2]
    dt = stepper.scheme.dt
    for j in range(n_steps):
        y = ybar[:, j, :] if per_point else ybar[j]
        x = stepper.step(x, y, buffer.at(k0 + j))
        check_bounded(x, k0 + j + 1, dt, index_offset)
        if record_every and on_record is not None and (j + 1) % record_every == 0:
            on_record(k0 + j + 1, x)
    return x


def _driver_values(driving: DrivingPath, k0: int, n_steps: int) -> np.ndarray:
    if n_steps == 0:
        return np.zeros((0, driving.spec.dim))
    return driving.grid_values(k0, k0 + n_steps)


def _evolve_chunk(start, stop, points, w_seeds, model, scheme, ybar, k0, w_step_offset):
    """Rows [start, stop) of an ensemble; points and w_seeds are already cut to the chunk"""
    stepper = Stepper(model, scheme)
    buffer = NoiseBuffer(w_seeds, model.dim, w_step_offset)
    return run_steps(stepper, points, k0, ybar, buffer, index_offset=start)


def evolve_points(
    model: SemilinearModel,
    scheme: StepScheme,
    points: np.ndarray,
    s: float,
    t: float,
    driving: DrivingPath,
    w_seeds: Sequence[int],
    w_step_offset: int = 0,
    pool: Optional[WorkerPool] = None,
) -> np.ndarray:
    """X(t, s, x) for every row of `points`, one WIENER seed per row"""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    w_seeds = np.asarray(w_seeds)
    if len(w_seeds) != points.shape[0]:
        raise ValueError("one wiener seed per point is required")
    k0 = grid_steps(s, scheme.dt, "s")
    n_steps = grid_steps(t - s, scheme.dt, "t - s")
    if n_steps < 0:
        raise ValueError("t must not precede s")
    if abs(driving.dt - scheme.dt) > 1e-15:
        raise ValueError("scheme and driving path must share dt")
    if n_steps == 0:
        return points.copy()
    ybar = _driver_values(driving, k0, n_steps)
    if pool is None or pool.workers == 1:
        return _evolve_chunk(0, len(points), points, w_seeds, model, scheme, ybar, k0, w_step_offset)
    parts = pool.map_chunks(
        _evolve_chunk, len(points), model, scheme, ybar, k0, w_step_offset, sliced=(points, w_seeds)
    )
    return np.concatenate(parts, axis=0)


def integrate(
    model: SemilinearModel,
    scheme: StepScheme,
    x0,
    s: float,
    t: float,
    driving: DrivingPath,
    w_seed: int,
    w_step_offset: int = 0,
) -> np.ndarray:
    """X^h(t, s, x0) along one WIENER stream"""
    x = np.asarray(x0, dtype=float).reshape(1, -1)
    return evolve_points(model, scheme, x, s, t, driving, [w_seed], w_step_offset)[0]


@dataclass(frozen=True)
class EnsembleState:
    """N endpoints at time t under one driving realization"""

    t: float
    points: np.ndarray
    driving: DrivingPath

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def measure(self) -> EmpiricalMeasure:
        return EmpiricalMeasure.from_points(self.points)

    def to_rows(self) -> list:
        return [
            {"index": i, "t": self.t, **{f"x{j}": float(v) for j, v in enumerate(p)}}
            for i, p in enumerate(self.points)
        ]


def evolve_ensemble(
    model: SemilinearModel,
    scheme: StepScheme,
    ens: EnsembleState,
    t: float,
    w_seeds: Sequence[int],
    w_step_offset: int = 0,
    pool: Optional[WorkerPool] = None,
) -> EnsembleState:
    """Advance every point of the ensemble to time t"""
    points = evolve_points(
        model, scheme, ens.points, ens.t, t, ens.driving, w_seeds, w_step_offset, pool
    )
    return EnsembleState(t, points, ens.driving)


def sample_kernel(
    model: SemilinearModel,
    scheme: StepScheme,
    x,
    s: float,
    t: float,
    driving: DrivingPath,
    n: int,
    seed: int,
    pool: Optional[WorkerPool] = None,
) -> EmpiricalMeasure:
    """n draws of X(t, s, x) over W under the frozen driving realization"""
    if n < 1:
        raise ValueError("n must be at least 1")
    start = np.tile(np.asarray(x, dtype=float).reshape(1, -1), (n, 1))
    points = evolve_points(model, scheme, start, s, t, driving, derive_seeds(seed, n), pool=pool)
    return EmpiricalMeasure.from_points(points)


def record_paths(
    model: SemilinearModel,
    scheme: StepScheme,
    points: np.ndarray,
    s: float,
    t: float,
    driving: DrivingPath,
    w_seeds: Sequence[int],
    record_every: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Trajectories of a batch sampled every `record_every` time units.

    Returns:
        (times of shape (M,), states of shape (M, N, dim)), starting at s
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    k0 = grid_steps(s, scheme.dt, "s")
    n_steps = grid_steps(t - s, scheme.dt, "t - s")
    every = grid_steps(record_every, scheme.dt, "record_every")
    if every < 1:
        raise ValueError("record_every must be at least one step")
    times = [k0 * scheme.dt]
    states = [points.copy()]

    def keep(k, x):
        times.append(k * scheme.dt)
        states.append(x.copy())

    run_steps(
        Stepper(model, scheme),
        points,
        k0,
        _driver_values(driving, k0, n_steps),
        NoiseBuffer(w_seeds, model.dim),
        record_every=every,
        on_record=keep,
    )
    return np.asarray(times), np.stack(states)


def integrate_path(
    model: SemilinearModel,
    scheme: StepScheme,
    x0,
    s: float,
    t: float,
    driving: DrivingPath,
    w_seed: int,
    record_every: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """One trajectory recorded every `record_every`; states have shape (M, dim)"""
    times, states = record_paths(
        model, scheme, np.asarray(x0, dtype=float).reshape(1, -1), s, t, driving, [w_seed], record_every
    )
    return times, states[:, 0, :]


def _enlarged_chunk(
    start, stop, x, windows, v_seeds, w_seeds, model, scheme, k0, n_steps, driving_spec, v_step_offset, w_step_offset
):
    advanced, values = extend_histories(
        driving_spec, windows, n_steps, scheme.dt, v_seeds, k0, v_step_offset
    )
    ybar = np.concatenate([windows[:, -1:, :], values[:, :-1, :]], axis=1)
    buffer = NoiseBuffer(w_seeds, model.dim, w_step_offset)
    return run_steps(Stepper(model, scheme), x, k0, ybar, buffer, index_offset=start), advanced


def integrate_enlarged(
    model: SemilinearModel,
    scheme: StepScheme,
    x: np.ndarray,
    windows: np.ndarray,
    k0: int,
    n_steps: int,
    v_seeds: Sequence[int],
    w_seeds: Sequence[int],
    driving_spec: OUSpec,
    v_step_offset: int = 0,
    w_step_offset: int = 0,
    pool: Optional[WorkerPool] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Evolve samples of Z = (X, H) with per-sample histories.

    Each sample's driver continues from its own window head along its DRIVING
    stream; the state is stepped with the left-point driver values.

    Args:
        x: states, shape (N, dim)
        windows: histories, shape (N, L, K), heads at absolute step k0

    Returns:
        (states, windows) after n_steps
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if n_steps == 0:
        return x.copy(), windows.copy()
    v_seeds, w_seeds = np.asarray(v_seeds), np.asarray(w_seeds)
    fixed = (model, scheme, k0, n_steps, driving_spec, v_step_offset, w_step_offset)
    if pool is None or pool.workers == 1:
        return _enlarged_chunk(0, len(x), x, windows, v_seeds, w_seeds, *fixed)
    parts = pool.map_chunks(_enlarged_chunk, len(x), *fixed, sliced=(x, windows, v_seeds, w_seeds))
    return (
        np.concatenate([p[0] for p in parts], axis=0),
        np.concatenate([p[1] for p in parts], axis=0),
    )
