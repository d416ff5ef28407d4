"""
Closed-form laws of the scalar example dX = (-X + Y) dt + dW driven by the
unit OU process dY = -Y dt + dV.

Given the driving realization, X(t, s, x) is Gaussian with
    mean  e^{-(t-s)} x + int_s^t e^{-(t-r)} Y(r) dr
    var   (1 - e^{-2(t-s)}) / 2
and the pullback limit s -> -inf is N(int_{-inf}^0 e^{theta} Y(t+theta) dtheta, 1/2).
Integrals over Y use the trapezoid rule on the driving grid.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple
import logging
import math

import numpy as np
from scipy.integrate import trapezoid

from sde.driving import DrivingPath, OUSpec, grid_steps
from sde.integrator import LinearModel
from sde.measures import gaussian_tv

logger = logging.getLogger(__name__)

PULLBACK_VARIANCE = 0.5


class GaussianMoments(NamedTuple):
    mean: float
    var: float


def example_model() -> LinearModel:
    """The scalar model A = -1, g(x, y) = y, sigma = 1"""
    return LinearModel.scalar(a=-1.0, gain=1.0, sigma=1.0)


def example_driving_spec() -> OUSpec:
    return OUSpec.uniform(1, drift=-1.0, scale=1.0)


def kernel_variance(elapsed: float) -> float:
    return -math.expm1(-2.0 * elapsed) / 2.0


def _scalar_values(driving: DrivingPath, k0: int, k1: int) -> np.ndarray:
    if driving.spec.dim != 1:
        raise ValueError("the closed-form example needs a scalar driver")
    return driving.grid_values(k0, k1 + 1)[:, 0]


def exact_kernel(x: float, s: float, t: float, driving: DrivingPath) -> GaussianMoments:
    """Mean and variance of X(t, s, x) under the frozen driving realization"""
    if t < s:
        raise ValueError("t must not precede s")
    if t == s:
        return GaussianMoments(float(x), 0.0)
    driving.require(s, t)
    dt = driving.dt
    k_s, k_t = grid_steps(s, dt, "s"), grid_steps(t, dt, "t")
    r = np.arange(k_s, k_t + 1) * dt
    y = _scalar_values(driving, k_s, k_t)
    forced = trapezoid(np.exp(-(t - r)) * y, r)
    return GaussianMoments(math.exp(-(t - s)) * float(x) + float(forced), kernel_variance(t - s))


def _history_steps(t: float, driving: DrivingPath, t_hist: Optional[float]) -> Tuple[int, int]:
    k_t = grid_steps(t, driving.dt, "t")
    if t_hist is None:
        m = k_t - driving.k_first
    else:
        m = grid_steps(t_hist, driving.dt, "t_hist")
    if m <= 0:
        raise ValueError("no history available before t")
    driving.require((k_t - m) * driving.dt, t)
    return k_t, m


def exact_evo_measure(
    t: float, driving: DrivingPath, t_hist: Optional[float] = None
) -> GaussianMoments:
    """
    Pullback law at time t, integrating the history over [-t_hist, 0].

    t_hist defaults to the whole past held by the driving path.
    """
    k_t, m = _history_steps(t, driving, t_hist)
    theta = np.arange(-m, 1) * driving.dt
    y = _scalar_values(driving, k_t - m, k_t)
    return GaussianMoments(float(trapezoid(np.exp(theta) * y, theta)), PULLBACK_VARIANCE)


def truncation_bound(t: float, driving: DrivingPath, t_hist: Optional[float] = None) -> float:
    """e^{-t_hist} sup |Y| over the window: error from cutting the infinite past"""
    k_t, m = _history_steps(t, driving, t_hist)
    y = _scalar_values(driving, k_t - m, k_t)
    return float(math.exp(-m * driving.dt) * np.max(np.abs(y)))


def exact_tv_kernels(x: float, y: float, s: float, t: float, driving: Optional[DrivingPath] = None) -> float:
    """
    TV between the kernels started at x and y.

    Both are Gaussian with the same variance; their means differ by
    e^{-(t-s)} (x - y) whatever the driving realization.
    """
    if t <= s:
        raise ValueError("t must be after s")
    decay = math.exp(-(t - s))
    return gaussian_tv(decay * x, decay * y, math.sqrt(kernel_variance(t - s)))


def stationary_marginal(spec: OUSpec) -> GaussianMoments:
    """
    x-marginal of the invariant measure of Z for the scalar example.

    With dY = -beta Y dt + s dV the forced part adds s^2 / (2 beta (1 + beta))
    to the noise variance 1/2.
    """
    if spec.dim != 1:
        raise ValueError("the closed-form example needs a scalar driver")
    beta = -spec.drift_eigs[0]
    scale = spec.noise_scale[0]
    return GaussianMoments(0.0, PULLBACK_VARIANCE + scale**2 / (2.0 * beta * (1.0 + beta)))


@dataclass(frozen=True)
class OracleState:
    """Frozen scalar realization with its quadrature step"""

    driving: DrivingPath
    quadrature_dt: float

    def __post_init__(self):
        spec = self.driving.spec
        if spec.dim != 1 or spec.drift_eigs[0] != -1.0 or spec.noise_scale[0] != 1.0:
            raise ValueError("the oracle needs the unit OU driver")
        if abs(self.quadrature_dt - self.driving.dt) > 1e-15:
            raise ValueError("quadrature runs on the driving grid")

    def kernel(self, x: float, s: float, t: float) -> GaussianMoments:
        return exact_kernel(x, s, t, self.driving)

    def evo_measure(self, t: float, t_hist: Optional[float] = None) -> GaussianMoments:
        return exact_evo_measure(t, self.driving, t_hist)

    def tv_kernels(self, x: float, y: float, s: float, t: float) -> float:
        return exact_tv_kernels(x, y, s, t, self.driving)
