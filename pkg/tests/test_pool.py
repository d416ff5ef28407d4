"""
Tests for the chunked worker pool and the pooled ensemble paths
"""

import numpy as np
import pytest

from core.pool import WorkerPool, chunk_bounds, concat_results
from core.rng import derive_seeds
from sde.driving import OUSpec, constant_path, covering_path, stationary_history_batch
from sde.ergodicity import lyapunov_audit, mixing_certificate
from sde.integrator import DivergenceError, LinearModel, StepScheme, evolve_points, integrate_enlarged


def rows_seen(start, stop, rows, labels, scale):
    return [(start, stop, len(rows), float(scale * rows.sum()), list(labels))]


@pytest.fixture
def pool():
    pool = WorkerPool(2)
    yield pool
    pool.close()


def test_chunk_bounds_cover_the_range():
    assert chunk_bounds(10, 3) == [(0, 4), (4, 7), (7, 10)]
    assert chunk_bounds(2, 5) == [(0, 1), (1, 2)]
    assert chunk_bounds(0, 4) == [(0, 0)]


@pytest.mark.parametrize("workers", [1, 3])
def test_each_chunk_gets_only_its_rows(workers):
    rows = np.arange(12.0)
    labels = [f"p{i}" for i in range(12)]
    pool = WorkerPool(workers)
    try:
        seen = concat_results(pool.map_chunks(rows_seen, 12, 2.0, sliced=(rows, labels), min_chunk=1))
    finally:
        pool.close()
    assert [s[0] for s in seen] == [b[0] for b in chunk_bounds(12, workers)]
    for start, stop, count, total, names in seen:
        assert count == stop - start
        assert total == pytest.approx(2.0 * rows[start:stop].sum())
        assert names == labels[start:stop]


def test_divergence_in_a_worker_keeps_the_global_index(pool):
    model = LinearModel.scalar(a=-1.0, gain=0.0, sigma=0.0)
    scheme = StepScheme(dt=0.01)
    path = constant_path(OUSpec.uniform(1), [0.0], 0.0, 1.0, 0.01)
    points = np.zeros((200, 1))
    points[150:] = 2e6
    with pytest.raises(DivergenceError) as info:
        evolve_points(model, scheme, points, 0.0, 1.0, path, derive_seeds(3, 200), pool=pool)
    assert info.value.index == 150
    assert info.value.step == 1


def test_enlarged_integration_ignores_worker_count(unit_model, scheme, unit_spec, pool):
    n = 200
    windows = stationary_history_batch(unit_spec, 1.0, scheme.dt, derive_seeds(30, n))
    x = np.linspace(-1, 1, n).reshape(-1, 1)
    args = (unit_model, scheme, x, windows, 0, 50, derive_seeds(31, n), derive_seeds(32, n), unit_spec)
    serial = integrate_enlarged(*args)
    parallel = integrate_enlarged(*args, pool=pool)
    assert np.array_equal(serial[0], parallel[0])
    assert np.array_equal(serial[1], parallel[1])


def test_mixing_certificate_ignores_worker_count(unit_model, scheme, unit_spec, pool):
    drivings = [covering_path(unit_spec, 0.0, 1.0, scheme.dt, seed) for seed in (1, 2, 3)]
    args = (unit_model, scheme, [1.0], [0.0], drivings, None, 1.0, 40, 9)
    serial = mixing_certificate(*args, record_every=0.1)
    parallel = mixing_certificate(*args, record_every=0.1, pool=pool)
    assert np.array_equal(serial.curves, parallel.curves)
    assert np.array_equal(serial.run.coupled_at, parallel.run.coupled_at, equal_nan=True)
    assert np.array_equal(serial.run.final_states, parallel.run.final_states)


def test_lyapunov_audit_ignores_worker_count(unit_model, scheme, unit_spec, pool):
    args = (unit_model, scheme, unit_spec, 0.1, 1, 200, 4)
    serial = lyapunov_audit(*args, n_periods=10, x0=[5.0], fit_size=2000)
    parallel = lyapunov_audit(*args, n_periods=10, x0=[5.0], fit_size=2000, pool=pool)
    assert serial.stopping_time_tail == parallel.stopping_time_tail
    assert serial.drift_excess == parallel.drift_excess
