"""
Validation Package for the ergodicity lab

Statistical acceptance checks shared by experiments and tests.

Modules:
- statistics: standard errors, binomial intervals, KS checks
"""

from .statistics import (
    binomial_se,
    combined_se,
    ks_pass,
    mean_and_se,
    nonincreasing_within,
    variance_and_se,
    wilson_interval,
    within_se,
)

__all__ = [
    "binomial_se",
    "combined_se",
    "ks_pass",
    "mean_and_se",
    "nonincreasing_within",
    "variance_and_se",
    "wilson_interval",
    "within_se",
]
