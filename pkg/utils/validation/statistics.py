"""
Statistical acceptance checks for Monte Carlo estimates.

Every property check in the lab compares an estimate against a reference
with an explicit tolerance: k standard errors, a binomial interval or a
Kolmogorov-Smirnov level.
"""

from typing import Callable, Sequence, Tuple
import logging
import math

import numpy as np
from scipy.stats import binomtest, kstest

logger = logging.getLogger(__name__)


def mean_and_se(values) -> Tuple[float, float]:
    """Sample mean and its standard error"""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("no values")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def variance_and_se(values) -> Tuple[float, float]:
    """Unbiased sample variance and its standard error (fourth-moment estimate)"""
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    if n < 4:
        raise ValueError("need at least 4 values")
    var = float(v.var(ddof=1))
    m4 = float(np.mean((v - v.mean()) ** 4))
    se = math.sqrt(max(m4 - var**2 * (n - 3) / (n - 1), 0.0) / n)
    return var, se


def within_se(estimate: float, reference: float, stderr: float, k: float = 3.0, floor: float = 0.0) -> bool:
    """|estimate - reference| <= k * stderr + floor"""
    return abs(estimate - reference) <= k * stderr + floor


def combined_se(*errors: float) -> float:
    return math.sqrt(sum(e * e for e in errors))


def binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion"""
    if trials <= 0:
        raise ValueError("trials must be positive")
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def ks_pass(samples, cdf: Callable, level: float = 0.01) -> Tuple[bool, float]:
    """One-sample KS test; passes when the p-value is above `level`"""
    res = kstest(np.asarray(samples, dtype=float).ravel(), cdf)
    return bool(res.pvalue > level), float(res.pvalue)


def nonincreasing_within(values: Sequence[float], stderr: Sequence[float], k: float = 2.0) -> bool:
    """No value exceeds an earlier one by more than k combined standard errors"""
    v = np.asarray(values, dtype=float)
    e = np.asarray(stderr, dtype=float)
    for i in range(1, len(v)):
        earlier = np.arange(i)
        slack = k * np.sqrt(e[earlier] ** 2 + e[i] ** 2)
        if np.any(v[i] - v[earlier] > slack):
            return False
    return True
