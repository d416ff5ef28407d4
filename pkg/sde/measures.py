"""
Empirical measures, distance estimators and maximal couplings.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
import ot
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import ndtr
from scipy.stats import iqr, linregress, norm

from config import settings
from core.rng import COUPLING, generator

logger = logging.getLogger(__name__)

MAX_TV_DIM = 3


class MixingFitError(Exception):
    """Raised when a decay curve cannot be fitted"""


# ======================
# Empirical measures
# ======================

@dataclass(frozen=True)
class EmpiricalMeasure:
    """Weighted point cloud; weights sum to 1"""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise ValueError("points must be a non-empty (M, d) array")
        if self.weights.shape != (self.points.shape[0],):
            raise ValueError("one weight per point is required")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")

    @classmethod
    def from_points(cls, points, weights=None) -> "EmpiricalMeasure":
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if weights is None:
            weights = np.full(points.shape[0], 1.0 / points.shape[0])
        else:
            weights = np.asarray(weights, dtype=float)
            weights = weights / weights.sum()
        return cls(points, weights)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def uniform(self) -> bool:
        return bool(np.ptp(self.weights) == 0)

    @property
    def effective_size(self) -> float:
        return float(1.0 / np.sum(self.weights**2))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def variance(self) -> np.ndarray:
        """Per-coordinate variance (unbiased for uniform weights)"""
        centered = self.points - self.mean()
        var = self.weights @ centered**2
        n = self.effective_size
        return var * n / (n - 1) if n > 1 else var

    def expectation(self, phi: Callable[[np.ndarray], np.ndarray]) -> Tuple[float, float]:
        """(integral of phi, standard error)"""
        values = np.asarray(phi(self.points), dtype=float)
        m = float(self.weights @ values)
        n = self.effective_size
        if n <= 1:
            return m, 0.0
        var = float(self.weights @ (values - m) ** 2) * n / (n - 1)
        return m, math.sqrt(var / n)

    def project(self, fn: Callable[[np.ndarray], np.ndarray]) -> "EmpiricalMeasure":
        """Push forward by an observable map"""
        values = np.asarray(fn(self.points), dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        return EmpiricalMeasure(values, self.weights)

    def head(self, count: int) -> "EmpiricalMeasure":
        """First `count` points, reweighted"""
        return EmpiricalMeasure.from_points(self.points[:count], self.weights[:count])


@dataclass(frozen=True)
class PseudoMetric:
    """d_n(x, y) = min(1, n |x - y|)"""

    n: float

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("n must be positive")

    def __call__(self, x, y) -> np.ndarray:
        diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return np.minimum(1.0, self.n * np.linalg.norm(np.atleast_1d(diff), axis=-1))

    def pairwise(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.minimum(1.0, self.n * cdist(a, b))


# ======================
# Total variation
# ======================

def histogram_binning(
    p: EmpiricalMeasure, q: EmpiricalMeasure, max_bins: int = settings.TV_MAX_BINS
) -> List[np.ndarray]:
    """Shared per-axis Freedman-Diaconis edges on the pooled sample"""
    pooled = np.vstack([p.points, q.points])
    n = pooled.shape[0]
    edges = []
    for col in pooled.T:
        lo, hi = float(col.min()), float(col.max())
        if hi <= lo:
            edges.append(np.array([lo - 0.5, lo + 0.5]))
            continue
        width = 2.0 * iqr(col) * n ** (-1.0 / 3.0)
        bins = max_bins if width <= 0 else int(np.clip(math.ceil((hi - lo) / width), 1, max_bins))
        edges.append(np.linspace(lo, hi, bins + 1))
    return edges


def _histogram(m: EmpiricalMeasure, edges: Sequence[np.ndarray]) -> Tuple[np.ndarray, float]:
    hist, _ = np.histogramdd(m.points, bins=list(edges), weights=m.weights)
    outside = max(0.0, 1.0 - float(hist.sum()))
    return hist, outside


def _with_overflow(edges: Sequence[np.ndarray], p: EmpiricalMeasure, q: EmpiricalMeasure) -> List[np.ndarray]:
    """Add a lower and an upper overflow bin on every axis"""
    padded = []
    for axis, e in enumerate(edges):
        e = np.asarray(e, dtype=float)
        col = np.concatenate([p.points[:, axis], q.points[:, axis]])
        lo = min(float(e[0]), float(col.min())) - 1.0
        hi = max(float(e[-1]), float(col.max())) + 1.0
        padded.append(np.concatenate([[lo], e, [hi]]))
    return padded


def tv_distance(
    p: EmpiricalMeasure,
    q: EmpiricalMeasure,
    binning: Optional[Sequence[np.ndarray]] = None,
    projection: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> float:
    """
    Histogram estimate of the total variation distance.

    Mass below and above a supplied binning lands in separate overflow bins per axis.
    """
    if projection is not None:
        p, q = p.project(projection), q.project(projection)
    if p.dim != q.dim:
        raise ValueError("measures must have the same dimension")
    if p.dim > MAX_TV_DIM:
        raise ValueError(f"total variation in dimension {p.dim} needs an observable projection")
    edges = binning if binning is not None else histogram_binning(p, q)
    if len(edges) != p.dim:
        raise ValueError(f"binning has {len(edges)} axes for measures of dimension {p.dim}")
    worst = max(_histogram(p, edges)[1], _histogram(q, edges)[1])
    if worst > settings.TV_OUTSIDE_MASS_WARN:
        logger.warning(f"⚠️  {worst:.2%} of the mass falls outside the binning range")
    padded = _with_overflow(edges, p, q)
    hp, _ = _histogram(p, padded)
    hq, _ = _histogram(q, padded)
    tv = 0.5 * float(np.abs(hp - hq).sum())
    return float(min(1.0, max(0.0, tv)))


def gaussian_tv(m1, m2, std) -> float:
    """TV between N(m1, diag(std^2)) and N(m2, diag(std^2))"""
    z = np.linalg.norm(np.atleast_1d((np.asarray(m1) - np.asarray(m2)) / np.asarray(std)))
    return float(2.0 * ndtr(z / 2.0) - 1.0)


# ======================
# Pseudo-metric Wasserstein
# ======================

def wasserstein_pseudo(p: EmpiricalMeasure, q: EmpiricalMeasure, d: PseudoMetric) -> float:
    """
    Optimal transport cost under d_n.

    Clouds up to EXACT_ASSIGNMENT_LIMIT points are solved exactly and must have
    equal sizes; larger clouds use the entropic solver.
    """
    if p.dim != q.dim:
        raise ValueError("measures must have the same dimension")
    cost = d.pairwise(p.points, q.points)
    if max(p.size, q.size) <= settings.EXACT_ASSIGNMENT_LIMIT:
        if p.size != q.size:
            raise ValueError(
                f"exact assignment needs equal cloud sizes ({p.size} != {q.size}); truncate with head() first"
            )
        if p.uniform and q.uniform:
            rows, cols = linear_sum_assignment(cost)
            value = float(cost[rows, cols].mean())
        else:
            value = float(ot.emd2(p.weights, q.weights, cost))
    else:
        value = float(
            ot.sinkhorn2(
                p.weights,
                q.weights,
                cost,
                reg=settings.SINKHORN_REG,
                numItermax=settings.SINKHORN_MAX_ITER,
            )
        )
    return float(min(1.0, max(0.0, value)))


# ======================
# Maximal coupling
# ======================

@dataclass(frozen=True)
class GaussianDensity:
    """N(mean, diag(std^2))"""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def of(cls, mean, std) -> "GaussianDensity":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls(mean, np.broadcast_to(np.asarray(std, dtype=float), mean.shape).copy())


@dataclass(frozen=True)
class HistogramDensity:
    """Piecewise-uniform density on a rectangular grid"""

    edges: List[np.ndarray]
    probs: np.ndarray

    @classmethod
    def from_measure(cls, m: EmpiricalMeasure, edges: Sequence[np.ndarray]) -> "HistogramDensity":
        hist, _ = _histogram(m, edges)
        total = hist.sum()
        if total <= 0:
            raise ValueError("no mass inside the binning range")
        return cls(list(edges), hist / total)

    def sample_cells(self, cells: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Uniform points inside flat cell indices"""
        idx = np.unravel_index(cells, self.probs.shape)
        out = np.empty((len(cells), len(self.edges)))
        for axis, e in enumerate(self.edges):
            lo = e[idx[axis]]
            hi = e[idx[axis] + 1]
            out[:, axis] = lo + (hi - lo) * rng.uniform(size=len(cells))
        return out


def _log_density(x, mean, std):
    return np.sum(norm.logpdf(x, loc=mean, scale=std), axis=-1)


def couple_gaussian_rows(
    m1: np.ndarray,
    m2: np.ndarray,
    std1: np.ndarray,
    std2: np.ndarray,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Row-wise maximal coupling of N(m1[i], std1[i]^2) and N(m2[i], std2[i]^2).

    Rejection construction: draw X from p and keep Y = X with probability
    min(1, q(X)/p(X)); otherwise draw Y from the normalized residual (q - p)+.
    Coordinates with zero std must coincide in both laws to be coupled.
    """
    m1, m2 = np.atleast_2d(m1), np.atleast_2d(m2)
    std1 = np.broadcast_to(std1, m1.shape)
    std2 = np.broadcast_to(std2, m2.shape)
    rows, dim = m1.shape

    degenerate = (std1 == 0) | (std2 == 0)
    blocked = np.any(degenerate & ((m1 != m2) | (std1 != std2)), axis=1)
    live = ~degenerate
    s1 = np.where(live, std1, 1.0)
    s2 = np.where(live, std2, 1.0)

    def logp(x, i):
        return _log_density(np.where(live[i], x, 0.0), np.where(live[i], m1[i], 0.0), s1[i])

    def logq(x, i):
        return _log_density(np.where(live[i], x, 0.0), np.where(live[i], m2[i], 0.0), s2[i])

    all_rows = np.arange(rows)
    x = m1 + std1 * rng.standard_normal((rows, dim))
    u = rng.uniform(size=rows)
    coupled = (np.log(u) + logp(x, all_rows) <= logq(x, all_rows)) & ~blocked
    y = np.where(coupled[:, None], x, 0.0)

    pending = np.flatnonzero(~coupled)
    if len(pending):
        # blocked rows need no rejection: p and q are mutually singular
        direct = pending[blocked[pending]]
        y[direct] = m2[direct] + std2[direct] * rng.standard_normal((len(direct), dim))
        pending = pending[~blocked[pending]]
    while len(pending):
        tv = 2.0 * ndtr(np.linalg.norm((m1[pending] - m2[pending]) / s1[pending], axis=1) / 2.0) - 1.0
        batch = int(np.clip(math.ceil(4.0 / max(float(tv.min()), 1e-9)), 1, 4096))
        batch = max(1, min(batch, int(2e7 // max(1, len(pending) * dim))))
        cand = m2[pending, None, :] + std2[pending, None, :] * rng.standard_normal((len(pending), batch, dim))
        uc = rng.uniform(size=(len(pending), batch))
        idx = pending[:, None]
        lq = _log_density(np.where(live[idx], cand, 0.0), np.where(live[idx], m2[idx], 0.0), s2[idx])
        lp = _log_density(np.where(live[idx], cand, 0.0), np.where(live[idx], m1[idx], 0.0), s1[idx])
        ok = np.log(uc) + lq > lp
        hit = ok.any(axis=1)
        first = np.argmax(ok, axis=1)
        done = pending[hit]
        y[done] = cand[hit, first[hit], :]
        pending = pending[~hit]
    return x, y, coupled


def _couple_histograms(
    p: HistogramDensity, q: HistogramDensity, count: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    pp, qq = p.probs.ravel(), q.probs.ravel()
    overlap = np.minimum(pp, qq)
    omega = float(overlap.sum())
    coupled = rng.uniform(size=count) < omega
    if omega >= 1.0 - 1e-12:
        coupled[:] = True
    cells = np.arange(pp.size)
    s1 = np.empty((count, len(p.edges)))
    s2 = np.empty_like(s1)
    n_same = int(coupled.sum())
    if n_same:
        shared = rng.choice(cells, size=n_same, p=overlap / omega)
        same = p.sample_cells(shared, rng)
        s1[coupled] = same
        s2[coupled] = same
    n_diff = count - n_same
    if n_diff:
        res_p = np.clip(pp - overlap, 0, None)
        res_q = np.clip(qq - overlap, 0, None)
        s1[~coupled] = p.sample_cells(rng.choice(cells, size=n_diff, p=res_p / res_p.sum()), rng)
        s2[~coupled] = q.sample_cells(rng.choice(cells, size=n_diff, p=res_q / res_q.sum()), rng)
    return s1, s2, coupled


Density = Union[GaussianDensity, HistogramDensity, EmpiricalMeasure]


def maximal_coupling(p: Density, q: Density, seed: int, size: Optional[int] = None):
    """
    Draw from a maximal coupling of p and q.

    Gaussian inputs are coupled exactly; empirical clouds are first binned on
    shared Freedman-Diaconis edges and coupled as histogram densities.

    Returns:
        (sample1, sample2, coupled); with size=None single draws of shape (d,)
    """
    count = 1 if size is None else int(size)
    rng = generator(seed, COUPLING)
    if isinstance(p, EmpiricalMeasure) and isinstance(q, EmpiricalMeasure):
        edges = histogram_binning(p, q)
        p, q = HistogramDensity.from_measure(p, edges), HistogramDensity.from_measure(q, edges)
    if isinstance(p, GaussianDensity) and isinstance(q, GaussianDensity):
        shape = (count, p.mean.shape[0])
        s1, s2, coupled = couple_gaussian_rows(
            np.broadcast_to(p.mean, shape),
            np.broadcast_to(q.mean, shape),
            np.broadcast_to(p.std, shape),
            np.broadcast_to(q.std, shape),
            rng,
        )
    elif isinstance(p, HistogramDensity) and isinstance(q, HistogramDensity):
        if p.probs.shape != q.probs.shape:
            raise ValueError("histogram densities must share their binning")
        s1, s2, coupled = _couple_histograms(p, q, count, rng)
    else:
        raise TypeError("maximal_coupling needs two densities of the same kind")
    if size is None:
        return s1[0], s2[0], bool(coupled[0])
    return s1, s2, coupled


# ======================
# Coupling runs and decay fits
# ======================

@dataclass
class MixingFit:
    """log(value) ~ log(c) - rate * t"""

    c: float
    rate: float
    stderr: float
    r_squared: float
    n_points: int

    @property
    def rate_lower(self) -> float:
        """Lower end of a 2-sigma interval on the rate"""
        return self.rate - 2.0 * self.stderr

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "rate": self.rate if math.isfinite(self.rate) else "inf",
            "stderr": self.stderr,
            "r_squared": self.r_squared,
            "n_points": self.n_points,
        }


@dataclass
class CouplingRun:
    """
    Paired trajectories and their coupling times.

    Attributes:
        times: checkpoint times
        coupled_at: per-pair coupling time, nan when never coupled
        final_states: optional (P, 2, d) endpoints of the two trajectories
    """

    times: np.ndarray
    coupled_at: np.ndarray
    final_states: Optional[np.ndarray] = None
    fitted: Optional[MixingFit] = None
    uncoupled_fraction: np.ndarray = field(init=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.coupled_at = np.asarray(self.coupled_at, dtype=float)
        never = np.isnan(self.coupled_at)
        at = np.where(never, np.inf, self.coupled_at)
        self.uncoupled_fraction = np.array([float(np.mean(at > t)) for t in self.times])

    @property
    def n_pairs(self) -> int:
        return self.coupled_at.shape[0]

    @property
    def pairs(self) -> list:
        states = self.final_states
        return [
            (
                None if states is None else states[i, 0],
                None if states is None else states[i, 1],
                None if np.isnan(c) else float(c),
            )
            for i, c in enumerate(self.coupled_at)
        ]

    def to_rows(self) -> list:
        return [
            {"time": float(t), "uncoupled_fraction": float(f)}
            for t, f in zip(self.times, self.uncoupled_fraction)
        ]


def _check_monotone(values: np.ndarray, tolerance: np.ndarray) -> None:
    rises = np.diff(values) - tolerance[1:]
    if np.any(rises > 0):
        i = int(np.argmax(rises)) + 1
        raise MixingFitError(f"curve increases beyond noise at checkpoint {i}")


def fit_mixing_rate(
    run: Union[CouplingRun, Sequence[float]],
    values: Optional[Sequence[float]] = None,
    stderr: Optional[Sequence[float]] = None,
    n_pairs: Optional[int] = None,
    min_points: int = 4,
) -> MixingFit:
    """
    Fit log(value) against time by least squares.

    Accepts a CouplingRun (uncoupled fractions, binomial noise) or explicit
    (times, values[, stderr]). A curve that is zero after its first point
    yields rate = inf.

    Raises:
        MixingFitError: fewer than min_points positive values, or a rise beyond 3 SE
    """
    if isinstance(run, CouplingRun):
        times, vals, n_pairs = run.times, run.uncoupled_fraction, run.n_pairs
    else:
        times = np.asarray(run, dtype=float)
        vals = np.asarray(values, dtype=float)
    if len(times) != len(vals) or len(vals) == 0:
        raise MixingFitError("times and values must be non-empty and aligned")

    if np.all(vals[1:] == 0):
        return MixingFit(c=float(vals[0]), rate=math.inf, stderr=0.0, r_squared=1.0, n_points=1)

    if stderr is not None:
        _check_monotone(vals, 3.0 * np.asarray(stderr, dtype=float))
    elif n_pairs:
        _check_monotone(vals, 3.0 * np.sqrt(vals * (1.0 - vals) / n_pairs) + 1.0 / n_pairs)

    mask = vals > 0
    if int(mask.sum()) < min_points:
        raise MixingFitError(
            f"need at least {min_points} positive checkpoints, got {int(mask.sum())}"
        )
    res = linregress(times[mask], np.log(vals[mask]))
    return MixingFit(
        c=float(np.exp(res.intercept)),
        rate=float(-res.slope),
        stderr=float(res.stderr),
        r_squared=float(res.rvalue**2),
        n_points=int(mask.sum()),
    )
