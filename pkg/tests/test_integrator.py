"""
Tests for the SDE stepping engine
"""

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import linregress

from core.pool import WorkerPool
from core.rng import derive_seeds
from sde.driving import OUSpec, constant_path, covering_path
from sde.integrator import (
    DivergenceError,
    EnsembleState,
    LinearModel,
    StepScheme,
    Stepper,
    evolve_ensemble,
    evolve_points,
    growth_probe,
    integrate,
    integrate_path,
    record_paths,
    sample_kernel,
)
from sde.oracle import exact_kernel
from utils.validation import mean_and_se, variance_and_se, within_se


@pytest.mark.parametrize("kind", ["exponential-euler", "euler-maruyama"])
def test_kernel_moments_match_closed_form(unit_model, unit_path, kind):
    scheme = StepScheme(dt=0.01, kind=kind)
    sample = sample_kernel(unit_model, scheme, [0.7], -1.0, 1.0, unit_path, 4000, 31)
    exact = exact_kernel(0.7, -1.0, 1.0, unit_path)
    mean, mean_se = mean_and_se(sample.points[:, 0])
    var, var_se = variance_and_se(sample.points[:, 0])
    assert within_se(mean, exact.mean, mean_se, k=4.0)
    assert within_se(var, exact.var, var_se, k=4.0)


@given(split=st.integers(1, 149))
def test_split_integration_is_bit_exact(split):
    model = LinearModel.scalar()
    scheme = StepScheme(dt=0.01)
    path = covering_path(OUSpec.uniform(1), -1.0, 1.0, 0.01, 3)
    seeds = derive_seeds(40, 5)
    x0 = np.linspace(-2, 2, 5).reshape(-1, 1)
    direct = evolve_points(model, scheme, x0, -1.0, 0.5, path, seeds)
    u = -1.0 + split * 0.01
    mid = evolve_points(model, scheme, x0, -1.0, u, path, seeds)
    two_legs = evolve_points(model, scheme, mid, u, 0.5, path, seeds)
    assert np.array_equal(direct, two_legs)


def test_zero_length_integration_returns_start(unit_model, scheme, unit_path):
    x0 = np.array([[1.0], [2.0]])
    out = evolve_points(unit_model, scheme, x0, 0.5, 0.5, unit_path, [1, 2])
    assert np.array_equal(out, x0)


def test_one_seed_per_point(unit_model, scheme, unit_path):
    with pytest.raises(ValueError):
        evolve_points(unit_model, scheme, np.zeros((3, 1)), 0.0, 1.0, unit_path, [1, 2])


def test_time_must_not_run_backwards(unit_model, scheme, unit_path):
    with pytest.raises(ValueError):
        evolve_points(unit_model, scheme, np.zeros((1, 1)), 1.0, 0.0, unit_path, [1])


def test_scheme_and_path_share_dt(unit_model, unit_path):
    with pytest.raises(ValueError):
        evolve_points(unit_model, StepScheme(dt=0.02), np.zeros((1, 1)), 0.0, 1.0, unit_path, [1])


def test_worker_count_does_not_change_results(unit_model, scheme, unit_path):
    points = np.linspace(-1, 1, 300).reshape(-1, 1)
    seeds = derive_seeds(5, 300)
    serial = evolve_points(unit_model, scheme, points, 0.0, 1.0, unit_path, seeds)
    pool = WorkerPool(2)
    try:
        parallel = evolve_points(unit_model, scheme, points, 0.0, 1.0, unit_path, seeds, pool=pool)
    finally:
        pool.close()
    assert np.max(np.abs(serial - parallel)) <= 1e-12


def test_divergence_is_reported():
    model = LinearModel.scalar(a=0.0, gain=1.0, sigma=0.0)
    scheme = StepScheme(dt=0.01)
    path = constant_path(OUSpec.uniform(1), [1e7], 0.0, 1.0, 0.01)
    with pytest.raises(DivergenceError) as info:
        integrate(model, scheme, [0.0], 0.0, 1.0, path, 1)
    assert info.value.index == 0
    assert info.value.norm > 1e6
    assert info.value.step <= 11


def test_noiseless_linear_model_is_deterministic():
    model = LinearModel.scalar(a=-1.0, gain=0.0, sigma=0.0)
    scheme = StepScheme(dt=0.01)
    path = constant_path(OUSpec.uniform(1), [0.0], 0.0, 1.0, 0.01)
    x = integrate(model, scheme, [2.0], 0.0, 1.0, path, 9)
    assert x[0] == pytest.approx(2.0 * np.exp(-1.0), rel=1e-10)


def test_stepper_std_is_exact_for_linear_decay(unit_model):
    stepper = Stepper(unit_model, StepScheme(dt=0.1))
    std = stepper.std(np.zeros((1, 1)), np.zeros(1))
    assert std[0, 0] == pytest.approx(np.sqrt(-np.expm1(-0.2) / 2.0))
    em = Stepper(unit_model, StepScheme(dt=0.1, kind="euler-maruyama"))
    assert em.std(np.zeros((1, 1)), np.zeros(1))[0, 0] == pytest.approx(np.sqrt(0.1))


def test_recorded_paths(unit_model, scheme, unit_path):
    times, states = record_paths(unit_model, scheme, np.zeros((4, 1)), 0.0, 1.0, unit_path, [1, 2, 3, 4], 0.25)
    assert np.allclose(times, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert states.shape == (5, 4, 1)
    end = evolve_points(unit_model, scheme, np.zeros((4, 1)), 0.0, 1.0, unit_path, [1, 2, 3, 4])
    assert np.array_equal(states[-1], end)

    times, one = integrate_path(unit_model, scheme, [0.0], 0.0, 1.0, unit_path, 3, 0.5)
    assert one.shape == (3, 1)
    assert np.array_equal(one[-1], states[-1, 2])


def test_ensemble_evolution(unit_model, scheme, unit_path):
    ens = EnsembleState(0.0, np.zeros((10, 1)), unit_path)
    later = evolve_ensemble(unit_model, scheme, ens, 0.5, derive_seeds(1, 10))
    assert later.t == 0.5
    assert later.size == 10
    assert later.measure().size == 10
    assert len(later.to_rows()) == 10


def test_growth_bounds_hold_for_linear_model(unit_model):
    ratios = growth_probe(unit_model, 500, 3)
    assert ratios["max_coupling_ratio"] <= 1.0
    assert ratios["max_diffusion_ratio"] <= 1.0


def test_euler_maruyama_has_weak_order_one():
    model = LinearModel.scalar(a=-1.0, gain=0.0, sigma=0.2)
    x0 = np.full((50_000, 1), 2.0)
    seeds = derive_seeds(61, len(x0))
    steps, errors = [0.2, 0.1, 0.05, 0.025], []
    for dt in steps:
        scheme = StepScheme(dt=dt, kind="euler-maruyama")
        path = constant_path(OUSpec.uniform(1), [0.0], 0.0, 1.0, dt)
        end = evolve_points(model, scheme, x0, 0.0, 1.0, path, seeds)
        errors.append(abs(float(end.mean()) - 2.0 * np.exp(-1.0)))
    slope = linregress(np.log(steps), np.log(errors)).slope
    assert 0.8 <= slope <= 1.2


def test_evolve_ensemble_commutes_with_permutation(unit_model, scheme, unit_path):
    points = np.linspace(-2, 2, 12).reshape(-1, 1)
    seeds = derive_seeds(62, len(points))
    perm = np.random.default_rng(0).permutation(len(points))
    ens = EnsembleState(0.0, points, unit_path)
    moved = evolve_ensemble(unit_model, scheme, ens, 1.0, seeds)
    moved_perm = evolve_ensemble(unit_model, scheme, EnsembleState(0.0, points[perm], unit_path), 1.0, seeds[perm])
    assert np.array_equal(moved_perm.points, moved.points[perm])
    assert moved_perm.t == moved.t == 1.0
