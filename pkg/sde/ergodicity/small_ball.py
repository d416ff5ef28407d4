"""
Support probes: irreducibility toward the origin and kernel regularity.
"""

from typing import Callable, Optional, Sequence
import logging

import numpy as np
from pydantic import BaseModel

from config import settings
from core.pool import WorkerPool
from sde.driving import DrivingPath, OUSpec, grid_steps, stationary_history_batch
from sde.integrator import SemilinearModel, StepScheme, Stepper, integrate_enlarged, sample_kernel
from sde.measures import MAX_TV_DIM, tv_distance
from sde.ergodicity.common import fresh_seeds, probe_directions
from utils.validation import wilson_interval

logger = logging.getLogger(__name__)


class SearchCapExceeded(Exception):
    """Raised when the noiseless system does not reach the small ball within the search cap"""

    def __init__(self, cap: int, radius: float):
        self.cap = cap
        self.radius = radius
        super().__init__(f"noiseless system still outside radius {radius:g} after {cap} periods")


class SmallBallReport(BaseModel):
    K0: int
    alpha_hat: float
    ci_low: float
    ci_high: float
    hits: int
    n_paths: int
    worst_probe: list
    rho1: float
    delta1: float
    T: float

    @property
    def irreducible(self) -> bool:
        return self.ci_low > 0


def find_k0(
    model: SemilinearModel,
    scheme: StepScheme,
    starts: np.ndarray,
    radius: float,
    T: float,
    cap: Optional[int] = None,
):
    """
    First K such that every start of the noiseless system dX = (AX + b(X)) dt
    is inside the ball of `radius` at time K T.

    Returns:
        (K, states at K T)
    """
    cap = settings.K0_SEARCH_CAP if cap is None else cap
    steps = grid_steps(T, scheme.dt, "T")
    stepper = Stepper(model, scheme)
    x = np.array(starts, dtype=float)
    k = 0
    while np.max(np.linalg.norm(x, axis=1)) > radius:
        if k >= cap:
            raise SearchCapExceeded(cap, radius)
        for _ in range(steps):
            x = stepper.autonomous(x)
        k += 1
    return k, x


def small_ball_probe(
    model: SemilinearModel,
    scheme: StepScheme,
    driving_spec: OUSpec,
    rho1: float,
    delta1: float,
    T: float,
    N: int,
    seed: int,
    n_random: int = 4,
    pool: Optional[WorkerPool] = None,
) -> SmallBallReport:
    """
    Estimate P(|X(K0 T)| <= delta1) from the worst probe start on the rho1-sphere.

    K0 is the first period at which every noiseless probe trajectory is inside
    delta1 / 2; the worst probe is the one with the largest norm at K0 T. The
    N noisy paths each run under their own stationary driver.
    """
    if not rho1 > delta1 > 0:
        raise ValueError("need rho1 > delta1 > 0")
    starts = rho1 * probe_directions(model.dim, n_random, seed)
    K0, ends = find_k0(model, scheme, starts, delta1 / 2.0, T)
    worst = starts[int(np.argmax(np.linalg.norm(ends, axis=1)))]
    logger.info(f"🚀 Small-ball probe: K0={K0}, estimating from {N} paths")

    dt = scheme.dt
    v_seeds = fresh_seeds(seed, N, 0)
    w_seeds = fresh_seeds(seed, N, 1)
    windows = stationary_history_batch(driving_spec, dt, dt, v_seeds, k_first=-1)
    x, _ = integrate_enlarged(
        model,
        scheme,
        np.tile(worst, (N, 1)),
        windows,
        0,
        K0 * grid_steps(T, dt, "T"),
        v_seeds,
        w_seeds,
        driving_spec,
        pool=pool,
    )
    hits = int(np.sum(np.linalg.norm(x, axis=1) <= delta1))
    low, high = wilson_interval(hits, N)
    alpha = hits / N
    status = "✅" if low > 0 else "⚠️ "
    logger.info(f"{status} alpha_hat={alpha:.4f} (95% CI [{low:.4f}, {high:.4f}])")
    return SmallBallReport(
        K0=K0,
        alpha_hat=alpha,
        ci_low=low,
        ci_high=high,
        hits=hits,
        n_paths=N,
        worst_probe=worst.tolist(),
        rho1=rho1,
        delta1=delta1,
        T=T,
    )


class RegularityReport(BaseModel):
    tv: float
    n_samples: int
    projected: bool
    regular: bool


def regularity_probe(
    model: SemilinearModel,
    scheme: StepScheme,
    x: Sequence[float],
    y: Sequence[float],
    s: float,
    t: float,
    driving: DrivingPath,
    N: int,
    seed: int,
    projection: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    pool: Optional[WorkerPool] = None,
) -> RegularityReport:
    """
    Histogram TV between the kernels pi_{s,t}(x, .) and pi_{s,t}(y, .).

    High-dimensional states are projected onto their first coordinate unless a
    projection is given. regular means the estimate stays below
    1 - 1/sqrt(N), i.e. the kernels visibly overlap.
    """
    p = sample_kernel(model, scheme, x, s, t, driving, N, seed, pool)
    q = sample_kernel(model, scheme, y, s, t, driving, N, seed + N, pool)
    if projection is None and model.dim > MAX_TV_DIM:
        projection = lambda pts: pts[:, 0]  # noqa: E731
    tv = tv_distance(p, q, projection=projection)
    return RegularityReport(
        tv=tv,
        n_samples=N,
        projected=projection is not None,
        regular=bool(tv < 1.0 - 1.0 / np.sqrt(N)),
    )
