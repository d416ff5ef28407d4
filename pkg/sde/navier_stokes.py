"""
2D Navier-Stokes in vorticity form on the 2*pi-periodic torus.

Spectral coefficients are normalized so that omega(x) = sum_k w_k e^{i k.x},
i.e. w = fft2(omega) / n^2. The Galerkin state keeps the retained
half-plane modes S (k2 > 0, or k2 = 0 and k1 > 0) as real coordinates

    x = sqrt(2) [Re w_k / |k| for k in S,  Im w_k / |k| for k in S]

so that |x|^2 is the mean kinetic energy and sum |k|^2 x^2 the mean enstrophy.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from core.rng import PROBE, generator
from sde.driving import DrivingPath, grid_steps
from sde.integrator import NoiseBuffer, SemilinearModel, StepScheme, Stepper, run_steps

logger = logging.getLogger(__name__)


class SpectralGrid:
    """n x n pseudospectral grid with the two-thirds dealiasing rule"""

    dealias_rule = "two-thirds"

    def __init__(self, n: int):
        if n < 4 or n % 2:
            raise ValueError("n must be an even integer >= 4")
        self.n = n
        k = np.fft.fftfreq(n, d=1.0 / n).round().astype(int)
        self.k1, self.k2 = np.meshgrid(k, k, indexing="ij")
        self.ksq = self.k1**2 + self.k2**2
        self.mask = (np.abs(self.k1) < n / 3.0) & (np.abs(self.k2) < n / 3.0)
        self.mask[0, 0] = False
        self.inv_ksq = np.where(self.ksq > 0, 1.0 / np.maximum(self.ksq, 1), 0.0)

        upper = (self.k2 > 0) | ((self.k2 == 0) & (self.k1 > 0))
        i_idx, j_idx = np.nonzero(self.mask & upper)
        order = np.lexsort((self.k1[i_idx, j_idx], self.k2[i_idx, j_idx], self.ksq[i_idx, j_idx]))
        self.i_idx, self.j_idx = i_idx[order], j_idx[order]
        self.i_neg, self.j_neg = (-self.i_idx) % n, (-self.j_idx) % n
        self.wavenumbers = np.stack([self.k1[self.i_idx, self.j_idx], self.k2[self.i_idx, self.j_idx]], axis=1)
        self.mode_ksq = self.ksq[self.i_idx, self.j_idx].astype(float)
        self.mode_norm = np.sqrt(self.mode_ksq)

    def __repr__(self):
        return f"<SpectralGrid n={self.n} modes={self.n_modes}>"

    @property
    def n_modes(self) -> int:
        return self.i_idx.shape[0]

    @property
    def dim(self) -> int:
        return 2 * self.n_modes

    @property
    def coord_ksq(self) -> np.ndarray:
        """|k|^2 per real coordinate"""
        return np.tile(self.mode_ksq, 2)

    def pack(self, omega_hat: np.ndarray) -> np.ndarray:
        """Complex spectrum (..., n, n) -> real coordinates (..., dim)"""
        c = omega_hat[..., self.i_idx, self.j_idx] / self.mode_norm
        return math.sqrt(2.0) * np.concatenate([c.real, c.imag], axis=-1)

    def unpack(self, x: np.ndarray) -> np.ndarray:
        """Real coordinates (..., dim) -> conjugate-symmetric spectrum (..., n, n)"""
        x = np.asarray(x, dtype=float)
        m = self.n_modes
        c = (x[..., :m] + 1j * x[..., m:]) * self.mode_norm / math.sqrt(2.0)
        out = np.zeros(x.shape[:-1] + (self.n, self.n), dtype=complex)
        out[..., self.i_idx, self.j_idx] = c
        out[..., self.i_neg, self.j_neg] = np.conj(c)
        return out

    def to_physical(self, omega_hat: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(omega_hat, norm="forward").real

    def to_spectral(self, omega: np.ndarray) -> np.ndarray:
        return np.fft.fft2(omega, norm="forward")

    def asymmetry(self, field_hat: np.ndarray) -> float:
        """max |w(-k) - conj w(k)|"""
        flipped = np.roll(np.flip(field_hat, axis=(-2, -1)), 1, axis=(-2, -1))
        return float(np.max(np.abs(flipped - np.conj(field_hat))))

    def energy(self, omega_hat: np.ndarray) -> np.ndarray:
        return np.sum(np.abs(omega_hat) ** 2 * self.inv_ksq, axis=(-2, -1))

    def enstrophy(self, omega_hat: np.ndarray) -> np.ndarray:
        return np.sum(np.abs(omega_hat) ** 2, axis=(-2, -1))


def nonlinear_term(grid: SpectralGrid, omega_hat: np.ndarray) -> np.ndarray:
    """
    Dealiased spectrum of -(u . grad) omega with u = (psi_y, -psi_x), -lap psi = omega.

    Works on batches (..., n, n).
    """
    w = omega_hat * grid.mask
    psi = w * grid.inv_ksq
    u = grid.to_physical(1j * grid.k2 * psi)
    v = grid.to_physical(-1j * grid.k1 * psi)
    wx = grid.to_physical(1j * grid.k1 * w)
    wy = grid.to_physical(1j * grid.k2 * w)
    return -grid.to_spectral(u * wx + v * wy) * grid.mask


class NSModelSpec(BaseModel):
    """
    Parameters of the stochastic vorticity model.

    c_k = c0 |k|^{-alpha} per real coordinate with c0 fixed by Tr C = trace_c.
    """

    model_config = ConfigDict(frozen=True)

    viscosity: float = Field(default=0.1, gt=0)
    alpha: float = Field(default=3.0, gt=2)
    trace_c: float = Field(default=1.0, gt=0)
    coupling_gain: float = 1.0
    driving_modes: int = Field(default=4, ge=0, description="lowest wavenumber shells forced by Y")
    linearized: bool = False


class NavierStokesModel(SemilinearModel):
    """NS vorticity Galerkin model with additive noise sqrt(C) and low-mode forcing G y"""

    additive = True

    def __init__(self, spec: NSModelSpec, grid: SpectralGrid):
        self.spec = spec
        self.grid = grid
        self.dim = grid.dim
        ksq = grid.coord_ksq
        self.a_eigs = -spec.viscosity * ksq

        weights = grid.mode_ksq ** (-spec.alpha / 2.0)
        c0 = spec.trace_c / (2.0 * weights.sum())
        self.c_eigs = np.tile(c0 * weights, 2)
        self.sigma = np.sqrt(self.c_eigs)

        shells = np.unique(grid.mode_ksq)[: spec.driving_modes]
        forced = np.flatnonzero(np.isin(grid.mode_ksq, shells))
        self.forced_coords = np.concatenate([forced, grid.n_modes + forced])
        self.driving_dim = self.forced_coords.shape[0]

    def __repr__(self):
        return (
            f"<NavierStokesModel n={self.grid.n} nu={self.spec.viscosity} "
            f"dim={self.dim} K={self.driving_dim}>"
        )

    @property
    def nondegeneracy(self) -> float:
        """min c_k |k|^2 over retained coordinates"""
        return float(np.min(self.c_eigs * self.grid.coord_ksq))

    def nonlinearity(self, x):
        if self.spec.linearized:
            return np.zeros_like(x)
        return self.grid.pack(nonlinear_term(self.grid, self.grid.unpack(x)))

    def coupling(self, x, y):
        out = np.zeros(np.shape(x))
        if self.driving_dim:
            out[..., self.forced_coords] = self.spec.coupling_gain * np.asarray(y)
        return out

    def diffusion(self, x, y):
        return self.sigma

    @property
    def kappa3(self) -> float:
        return float(max(abs(self.spec.coupling_gain), math.sqrt(self.spec.trace_c)))

    def energy(self, x: np.ndarray) -> np.ndarray:
        return np.sum(np.asarray(x) ** 2, axis=-1)

    def enstrophy(self, x: np.ndarray) -> np.ndarray:
        return np.sum(self.grid.coord_ksq * np.asarray(x) ** 2, axis=-1)


def as_semilinear(spec: NSModelSpec, grid: SpectralGrid) -> NavierStokesModel:
    """
    The vorticity equation as dX = (AX + b(X) + g(X, Y)) dt + sqrt(C) dW with
    A = -viscosity |k|^2 in velocity-normalized coordinates.
    """
    model = NavierStokesModel(spec, grid)
    logger.debug(f"🌀 Built {model!r}")
    return model


def initial_state(model: NavierStokesModel, energy: float, seed: int) -> np.ndarray:
    """Random smooth state with |x|^2 = energy, spectrum decaying like c_k"""
    rng = generator(seed, PROBE, stream_id=2)
    x = rng.standard_normal(model.dim) * model.sigma
    return x * math.sqrt(energy / np.sum(x**2))


def snapshot_rows(grid: SpectralGrid, omega_hat: np.ndarray) -> List[dict]:
    """(k1, k2, re, im) rows of the retained half-plane modes"""
    c = omega_hat[grid.i_idx, grid.j_idx]
    return [
        {"k1": int(k[0]), "k2": int(k[1]), "re": float(v.real), "im": float(v.imag)}
        for k, v in zip(grid.wavenumbers, c)
    ]


# ======================
# Conservation diagnostics
# ======================

@dataclass
class ConservationReport:
    energy_drift: float
    enstrophy_drift: float
    t_end: float
    dt: float

    def passed(self, tolerance: float = 1e-8) -> bool:
        return self.energy_drift <= tolerance and self.enstrophy_drift <= tolerance

    def to_dict(self) -> dict:
        return {
            "energy_drift": self.energy_drift,
            "enstrophy_drift": self.enstrophy_drift,
            "t_end": self.t_end,
            "dt": self.dt,
        }


def conservation_audit(grid: SpectralGrid, omega_hat: np.ndarray, dt: float, t_end: float) -> ConservationReport:
    """
    Relative energy and enstrophy drift per unit time of the inviscid,
    unforced truncation, integrated with classical RK4.
    """
    steps = grid_steps(t_end, dt, "t_end")
    w = omega_hat * grid.mask
    e0, z0 = float(grid.energy(w)), float(grid.enstrophy(w))

    def rhs(field):
        return nonlinear_term(grid, field)

    for _ in range(steps):
        k1 = rhs(w)
        k2 = rhs(w + 0.5 * dt * k1)
        k3 = rhs(w + 0.5 * dt * k2)
        k4 = rhs(w + dt * k3)
        w = w + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    e1, z1 = float(grid.energy(w)), float(grid.enstrophy(w))
    report = ConservationReport(
        energy_drift=abs(e1 - e0) / (e0 * t_end),
        enstrophy_drift=abs(z1 - z0) / (z0 * t_end),
        t_end=t_end,
        dt=dt,
    )
    logger.info(
        f"✅ Conservation audit: energy drift {report.energy_drift:.2e}, "
        f"enstrophy drift {report.enstrophy_drift:.2e} per unit time"
    )
    return report


# ======================
# Energy estimate audit
# ======================

@dataclass
class EnergyTrace:
    """
    Energy balance samples along an ensemble of paths.

    Attributes:
        times: record times, shape (P,)
        energy: |X(t)|^2 per path, shape (M, P)
        dissipation_integral: int_s^t -(AX, X) per path, shape (M, P)
        forcing_integral: int_s^t h(|Y|)^2, shape (P,)
        forcing_peak: max over the grid of h(|Y|)^2
        x0_energy: |x|^2
        lambda1: Poincare constant of A
        final_states: endpoints X(t), shape (M, dim)
    """

    times: np.ndarray
    energy: np.ndarray
    dissipation_integral: np.ndarray
    forcing_integral: np.ndarray
    forcing_peak: float
    x0_energy: float
    lambda1: float
    final_states: Optional[np.ndarray] = None


def record_energy_trace(
    model: SemilinearModel,
    scheme: StepScheme,
    x0,
    s: float,
    t: float,
    driving: DrivingPath,
    w_seeds: Sequence[int],
    record_every: float,
) -> EnergyTrace:
    """Integrate an ensemble from x0 and accumulate the energy balance (trapezoid in time)"""
    dt = scheme.dt
    k0 = grid_steps(s, dt, "s")
    n_steps = grid_steps(t - s, dt, "t - s")
    every = grid_steps(record_every, dt, "record_every")
    x = np.tile(np.asarray(x0, dtype=float).reshape(1, -1), (len(w_seeds), 1))
    ybar = driving.grid_values(k0, k0 + n_steps)
    h_sq = model.growth_bound(np.linalg.norm(ybar, axis=1)) ** 2
    forcing_cum = np.concatenate([[0.0], np.cumsum(h_sq) * dt])

    state = {"prev": model.dissipation(x), "integral": np.zeros(len(x))}
    times, energies, dissipations, forcing = [s], [np.sum(x**2, axis=1)], [np.zeros(len(x))], [0.0]

    def accumulate(k, xk):
        d_new = model.dissipation(xk)
        state["integral"] = state["integral"] + 0.5 * dt * (state["prev"] + d_new)
        state["prev"] = d_new
        if (k - k0) % every == 0:
            times.append(k * dt)
            energies.append(np.sum(xk**2, axis=1))
            dissipations.append(state["integral"].copy())
            forcing.append(float(forcing_cum[k - k0]))

    final = run_steps(
        Stepper(model, scheme), x, k0, ybar, NoiseBuffer(w_seeds, model.dim), record_every=1, on_record=accumulate
    )
    return EnergyTrace(
        times=np.asarray(times),
        energy=np.stack(energies, axis=1),
        dissipation_integral=np.stack(dissipations, axis=1),
        forcing_integral=np.asarray(forcing),
        forcing_peak=float(np.max(h_sq)) if len(h_sq) else 0.0,
        x0_energy=float(np.sum(np.asarray(x0, dtype=float) ** 2)),
        lambda1=model.lambda1,
        final_states=final,
    )


@dataclass
class EnergyAuditReport:
    times: np.ndarray
    lhs_mean: np.ndarray
    lhs_stderr: np.ndarray
    rhs: np.ndarray
    passed: bool
    worst_margin: float
    time_average_lhs: float
    time_average_rhs: float
    time_average_passed: bool

    def to_rows(self) -> List[dict]:
        return [
            {"t": float(t), "lhs": float(l), "stderr": float(e), "rhs": float(r)}
            for t, l, e, r in zip(self.times, self.lhs_mean, self.lhs_stderr, self.rhs)
        ]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "time_average_lhs": self.time_average_lhs,
            "time_average_rhs": self.time_average_rhs,
            "time_average_passed": self.time_average_passed,
        }


def energy_audit(trace: EnergyTrace) -> EnergyAuditReport:
    """
    Check E|X(t)|^2 + E int_s^t D <= |x|^2 + (1 + 1/lambda1) int_s^t h(|Y|)^2
    with D = -(AX, X), and the time-average form
    (1/t) E int D <= |x|^2 / t + (1 + 1/lambda1) sup h(|Y|)^2,
    each within 3 standard errors.
    """
    factor = 1.0 + 1.0 / trace.lambda1
    n_paths = trace.energy.shape[0]
    lhs = trace.energy + trace.dissipation_integral
    lhs_mean = lhs.mean(axis=0)
    lhs_se = lhs.std(axis=0, ddof=1) / math.sqrt(n_paths) if n_paths > 1 else np.zeros_like(lhs_mean)
    rhs = trace.x0_energy + factor * trace.forcing_integral
    excess = lhs_mean - rhs - 3.0 * lhs_se
    passed = bool(np.all(excess <= 0))
    if not passed:
        i = int(np.argmax(excess))
        logger.warning(f"⚠️  Energy estimate violated at t={trace.times[i]:g} by {excess[i]:.3g}")

    elapsed = float(trace.times[-1] - trace.times[0])
    diss = trace.dissipation_integral[:, -1]
    ta_lhs = float(diss.mean() / elapsed) if elapsed > 0 else 0.0
    ta_se = float(diss.std(ddof=1) / math.sqrt(n_paths) / elapsed) if elapsed > 0 and n_paths > 1 else 0.0
    ta_rhs = (trace.x0_energy / elapsed if elapsed > 0 else math.inf) + factor * trace.forcing_peak
    return EnergyAuditReport(
        times=trace.times,
        lhs_mean=lhs_mean,
        lhs_stderr=lhs_se,
        rhs=rhs,
        passed=passed,
        worst_margin=float(np.max(lhs_mean - rhs)),
        time_average_lhs=ta_lhs,
        time_average_rhs=float(ta_rhs),
        time_average_passed=bool(ta_lhs - 3.0 * ta_se <= ta_rhs),
    )
