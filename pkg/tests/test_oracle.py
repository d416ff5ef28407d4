"""
Tests for the closed-form scalar example
"""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sde.driving import OUSpec, constant_path, covering_path
from sde.oracle import (
    OracleState,
    exact_evo_measure,
    exact_kernel,
    exact_tv_kernels,
    kernel_variance,
    stationary_marginal,
    truncation_bound,
)


def test_kernel_at_zero_elapsed_time(unit_path):
    assert exact_kernel(1.3, 0.5, 0.5, unit_path) == (1.3, 0.0)


def test_kernel_under_constant_driver():
    path = constant_path(OUSpec.uniform(1), [2.0], 0.0, 3.0, 0.001)
    moments = exact_kernel(1.0, 0.0, 3.0, path)
    # mean solves x' = -x + 2
    assert moments.mean == pytest.approx(2.0 + (1.0 - 2.0) * math.exp(-3.0), abs=1e-6)
    assert moments.var == pytest.approx((1 - math.exp(-6.0)) / 2.0)


def test_kernel_rejects_reversed_times(unit_path):
    with pytest.raises(ValueError):
        exact_kernel(0.0, 1.0, 0.5, unit_path)


def test_kernel_variance_limits():
    assert kernel_variance(0.0) == 0.0
    assert kernel_variance(50.0) == pytest.approx(0.5)


def test_pullback_measure_is_kernel_limit(unit_path):
    far = exact_kernel(0.0, -12.0, 1.0, unit_path)
    limit = exact_evo_measure(1.0, unit_path, t_hist=13.0)
    assert limit.var == 0.5
    assert far.mean == pytest.approx(limit.mean, abs=1e-9)
    assert abs(far.var - limit.var) < 1e-10


def test_truncation_bound_shrinks_with_history(unit_path):
    short = truncation_bound(1.0, unit_path, 2.0)
    long = truncation_bound(1.0, unit_path, 10.0)
    assert long < short
    assert long <= math.exp(-10.0) * np.max(np.abs(unit_path.samples))


@given(
    x=st.floats(-5, 5),
    y=st.floats(-5, 5),
    elapsed=st.floats(0.05, 5.0),
)
def test_tv_between_kernels(x, y, elapsed):
    tv = exact_tv_kernels(x, y, 0.0, elapsed)
    assert 0.0 <= tv <= 1.0
    assert tv == pytest.approx(exact_tv_kernels(y, x, 0.0, elapsed))
    assert exact_tv_kernels(x, y, 0.0, elapsed + 1.0) <= tv + 1e-12


def test_tv_is_zero_for_equal_starts():
    assert exact_tv_kernels(0.4, 0.4, 0.0, 1.0) == 0.0


def test_tv_between_kernels_known_value():
    # means 1 apart, common variance 3/8
    assert exact_tv_kernels(2.0, 0.0, 0.0, math.log(2.0)) == pytest.approx(0.5859, abs=1e-4)


def test_stationary_marginal():
    assert stationary_marginal(OUSpec.uniform(1)) == (0.0, 0.75)
    quiet = stationary_marginal(OUSpec.uniform(1, drift=-2.0, scale=0.0))
    assert quiet.var == 0.5


def test_oracle_state_requires_unit_driver():
    path = covering_path(OUSpec.uniform(1, drift=-2.0), 0.0, 1.0, 0.01, 1)
    with pytest.raises(ValueError):
        OracleState(path, 0.01)


def test_oracle_state_delegates(unit_path):
    state = OracleState(unit_path, 0.01)
    assert state.kernel(0.2, 0.0, 1.0) == exact_kernel(0.2, 0.0, 1.0, unit_path)
    assert state.evo_measure(1.0) == exact_evo_measure(1.0, unit_path)
    assert state.tv_kernels(1.0, 0.0, 0.0, 1.0) == exact_tv_kernels(1.0, 0.0, 0.0, 1.0)
