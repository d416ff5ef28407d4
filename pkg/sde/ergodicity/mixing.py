"""
Coupling-based exponential mixing certificate.

For each driving realization, P pairs of trajectories start at x and y and
share their WIENER increments. At every checkpoint kT, uncoupled pairs whose
states both lie in the ball B_delta attempt a one-step maximal coupling of
their Gaussian transitions; a coupled pair stays identical afterwards since
it keeps sharing increments. The certificate is the driving-averaged curve
|P_{s,t} phi(x) - P_{s,t} phi(y)| and its fitted exponential rate.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence
import logging
import math

import numpy as np

from core.pool import WorkerPool, concat_results
from core.rng import COUPLING, generator
from sde.driving import DrivingPath, grid_steps
from sde.integrator import (
    NoiseBuffer,
    SemilinearModel,
    StepScheme,
    Stepper,
    check_bounded,
    deterministic_step,
    step_std,
)
from sde.measures import CouplingRun, MixingFit, MixingFitError, couple_gaussian_rows, fit_mixing_rate
from sde.ergodicity.common import fresh_seeds
from sde.ergodicity.pullback import EvoSystemEstimate
from utils.validation import mean_and_se, nonincreasing_within

logger = logging.getLogger(__name__)

OBSERVABLES: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "coordinate": lambda x: x[:, 0],
    "tanh": lambda x: np.tanh(x[:, 0]),
}


@dataclass
class MixingCertificate:
    """
    Attributes:
        times: record times (elapsed since s)
        curves: per-realization |P phi(x) - P phi(y)|, shape (n_drivings, len(times))
        uncoupled: per-realization uncoupled fractions, same shape
        fit: exponential fit of the averaged curve, None when it failed
        run: pooled coupling times of every pair
        limit_curve: rows (t, value, stderr) of the distance to the random limit curve
    """

    times: np.ndarray
    curves: np.ndarray
    uncoupled: np.ndarray
    fit: Optional[MixingFit]
    fit_error: Optional[str]
    run: CouplingRun
    coupling_attempted: bool
    nonincreasing: bool
    observable: str
    limit_curve: Optional[List[dict]] = None
    coupled_identical: bool = True

    @property
    def curve(self) -> np.ndarray:
        return self.curves.mean(axis=0)

    @property
    def curve_se(self) -> np.ndarray:
        return np.array([mean_and_se(c)[1] for c in self.curves.T])

    @property
    def rate_positive(self) -> bool:
        return self.fit is not None and self.fit.rate_lower > 0

    def to_rows(self) -> list:
        rows = []
        frac = self.uncoupled.mean(axis=0)
        for t, v, se, f in zip(self.times, self.curve, self.curve_se, frac):
            rows.append({"t": float(t), "value": float(v), "stderr": float(se), "uncoupled_fraction": float(f)})
        return rows

    def to_dict(self) -> dict:
        return {
            "observable": self.observable,
            "n_drivings": int(self.curves.shape[0]),
            "n_pairs": self.run.n_pairs,
            "fit": None if self.fit is None else self.fit.to_dict(),
            "fit_error": self.fit_error,
            "coupled_fraction_fit": None if self.run.fitted is None else self.run.fitted.to_dict(),
            "coupling_attempted": self.coupling_attempted,
            "nonincreasing": self.nonincreasing,
            "rate_positive": self.rate_positive,
            "limit_curve": self.limit_curve,
            "coupled_identical": self.coupled_identical,
        }


def _one_realization(
    stepper: Stepper,
    x: np.ndarray,
    y: np.ndarray,
    s: float,
    driving: DrivingPath,
    n_steps: int,
    check_every: int,
    record_every: int,
    ball: float,
    w_seeds: np.ndarray,
    coupling_seed: int,
    phi: Callable[[np.ndarray], np.ndarray],
    limit: Optional[EvoSystemEstimate],
):
    dt = stepper.scheme.dt
    P = len(w_seeds)
    k_s = grid_steps(s, dt, "s")
    x1 = np.tile(x, (P, 1))
    x2 = np.tile(y, (P, 1))
    coupled = np.all(x1 == x2, axis=1)
    coupled_at = np.where(coupled, 0.0, np.nan)
    buffer = NoiseBuffer(w_seeds, stepper.model.dim)
    ybar = driving.grid_values(k_s, k_s + n_steps)
    attempts = 0

    curve, fractions, limit_rows = [], [], []

    def record(j):
        curve.append(abs(float(np.mean(phi(x1)) - np.mean(phi(x2)))))
        fractions.append(float(np.mean(~coupled)))
        if limit is not None:
            t_abs = s + j * dt
            hits = np.flatnonzero(np.isclose(limit.times, t_abs, rtol=0.0, atol=1e-9))
            if len(hits):
                target = float(np.mean(phi(limit.measures[hits[0]].points)))
                limit_rows.append((j * dt, abs(float(np.mean(phi(x1))) - target)))

    record(0)
    for j in range(n_steps):
        k = k_s + j
        yk = ybar[j]
        xi = buffer.at(k)
        new1 = stepper.step(x1, yk, xi)
        new2 = stepper.step(x2, yk, xi)
        if j % check_every == 0:
            inside = (np.linalg.norm(x1, axis=1) <= ball) & (np.linalg.norm(x2, axis=1) <= ball)
            idx = np.flatnonzero(~coupled & inside)
            if len(idx):
                attempts += len(idx)
                rng = generator(coupling_seed, COUPLING, stream_id=j // check_every)
                model, scheme = stepper.model, stepper.scheme
                a, b, ok = couple_gaussian_rows(
                    deterministic_step(model, scheme, x1[idx], yk),
                    deterministic_step(model, scheme, x2[idx], yk),
                    step_std(model, scheme, x1[idx], yk),
                    step_std(model, scheme, x2[idx], yk),
                    rng,
                )
                new1[idx] = a
                new2[idx] = b
                newly = idx[ok]
                coupled[newly] = True
                coupled_at[newly] = (j + 1) * dt
        x1, x2 = new1, new2
        check_bounded(x1, k + 1, dt, 0)
        check_bounded(x2, k + 1, dt, 0)
        if (j + 1) % record_every == 0:
            record(j + 1)
    finals = np.stack([x1, x2], axis=1)
    return np.asarray(curve), np.asarray(fractions), coupled_at, attempts, limit_rows, finals


def _realization_chunk(
    start, stop, drivings, limits, model, scheme, x, y, s, n_steps, check_every, record_every, ball, P, seed, observable
):
    """Realizations [start, stop); seeds depend on the global realization index only"""
    stepper = Stepper(model, scheme)
    results = []
    for offset, (driving, limit) in enumerate(zip(drivings, limits)):
        j = start + offset
        results.append(
            _one_realization(
                stepper,
                x,
                y,
                s,
                driving,
                n_steps,
                check_every,
                record_every,
                ball,
                fresh_seeds(seed, P, j),
                seed + j,
                OBSERVABLES[observable],
                limit,
            )
        )
    return results


def mixing_certificate(
    model: SemilinearModel,
    scheme: StepScheme,
    x: Sequence[float],
    y: Sequence[float],
    drivings: Sequence[DrivingPath],
    T: Optional[float],
    horizon: float,
    P: int,
    seed: int,
    s: float = 0.0,
    ball: float = math.inf,
    record_every: Optional[float] = None,
    observable: str = "coordinate",
    limits: Optional[Sequence[EvoSystemEstimate]] = None,
    pool: Optional[WorkerPool] = None,
) -> MixingCertificate:
    """
    Run the coupling schedule over every driving realization.

    Args:
        T: coupling attempt period (default: every step)
        horizon: elapsed time after s
        P: pairs per realization
        ball: radius of the ball B_delta where coupling is attempted
        record_every: curve resolution (default: horizon / 20)
        limits: per-realization pullback estimates for the limit-curve distance
        pool: realizations are spread over its workers

    Returns:
        MixingCertificate; fit is None (with fit_error) when the curve cannot be fitted
    """
    if model.diffusion_kind != "diagonal" or not model.additive:
        raise ValueError("the coupling certificate needs additive diagonal noise")
    if not drivings:
        raise ValueError("at least one driving realization is required")
    if limits is not None and len(limits) != len(drivings):
        raise ValueError("one limit estimate per realization is required")
    if observable not in OBSERVABLES:
        raise ValueError(f"unknown observable {observable!r}; choose from {sorted(OBSERVABLES)}")
    dt = scheme.dt
    n_steps = grid_steps(horizon, dt, "horizon")
    check_every = 1 if T is None else grid_steps(T, dt, "T")
    if record_every is None:
        rec = max(1, n_steps // 20)
    else:
        rec = grid_steps(record_every, dt, "record_every")
    if check_every < 1 or rec < 1 or n_steps < rec:
        raise ValueError("T, record_every and horizon must span whole steps")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    logger.info(
        f"🚀 Mixing certificate: {len(drivings)} realizations x {P} pairs, horizon {horizon:g}, "
        f"coupling every {check_every} steps"
    )
    drivings = list(drivings)
    for driving in drivings:
        driving.require(s, s + horizon)
    limit_list = [None] * len(drivings) if limits is None else list(limits)

    fixed = (model, scheme, x, y, s, n_steps, check_every, rec, ball, P, seed, observable)
    if pool is None or pool.workers == 1:
        results = _realization_chunk(0, len(drivings), drivings, limit_list, *fixed)
    else:
        parts = pool.map_chunks(
            _realization_chunk, len(drivings), *fixed, sliced=(drivings, limit_list), min_chunk=1
        )
        results = concat_results(parts)
    curves, fractions, coupled_at, tries, limit_rows, finals = (list(col) for col in zip(*results))
    attempts = sum(tries)

    times = np.arange(len(curves[0])) * rec * dt
    curves = np.stack(curves)
    fractions = np.stack(fractions)
    curve = curves.mean(axis=0)
    curve_se = np.array([mean_and_se(col)[1] for col in curves.T])

    if attempts == 0:
        logger.warning("⚠️  Coupling was never attempted: no pair entered the ball")
    nonincreasing = nonincreasing_within(curve, curve_se, k=2.0)

    fit, fit_error = None, None
    try:
        fit = fit_mixing_rate(times, curve, curve_se)
        logger.info(f"✅ Fitted mixing rate {fit.rate:.4f} +/- {fit.stderr:.4f}")
    except MixingFitError as e:
        fit_error = str(e)
        logger.warning(f"⚠️  Mixing fit failed: {e}")

    run = CouplingRun(times, np.concatenate(coupled_at), final_states=np.concatenate(finals))
    # a coupled pair shares every later increment, so its endpoints agree bit for bit
    coupled_identical = all(np.array_equal(a, b) for a, b, at in run.pairs if at is not None)
    if not coupled_identical:
        logger.warning("⚠️  Some coupled pairs separated after coupling")
    try:
        run.fitted = fit_mixing_rate(run)
    except MixingFitError:
        pass

    limit_curve = None
    if limits is not None:
        by_time: Dict[float, list] = {}
        for rows in limit_rows:
            for t, v in rows:
                by_time.setdefault(round(t, 12), []).append(v)
        limit_curve = [
            {"t": t, "value": mean_and_se(v)[0], "stderr": mean_and_se(v)[1]}
            for t, v in sorted(by_time.items())
        ]

    return MixingCertificate(
        times=times,
        curves=curves,
        uncoupled=fractions,
        fit=fit,
        fit_error=fit_error,
        run=run,
        coupling_attempted=attempts > 0,
        nonincreasing=nonincreasing,
        observable=observable,
        limit_curve=limit_curve,
        coupled_identical=coupled_identical,
    )
