"""
Tests for the counter-based noise streams
"""

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from core.rng import (
    DRIVING,
    WIENER,
    NoiseStream,
    check_disjoint,
    derive_seeds,
    generator,
    stream_key,
    stream_normals,
)
from utils.validation import ks_pass


@given(
    seed=st.integers(0, 2**40),
    k0=st.integers(-5000, 5000),
    length=st.integers(1, 300),
    cut=st.integers(0, 300),
)
def test_any_window_replays_the_same_normals(seed, k0, length, cut):
    stream = NoiseStream(seed, WIENER, 2)
    whole = stream.normals(k0, k0 + length)
    cut = min(cut, length)
    left = stream.normals(k0, k0 + cut)
    right = NoiseStream(seed, WIENER, 2).normals(k0 + cut, k0 + length)
    assert np.array_equal(whole, np.vstack([left, right]))


@given(seed=st.integers(0, 2**40), m=st.integers(-200, 200))
def test_shifted_stream_reads_ahead(seed, m):
    stream = NoiseStream(seed, DRIVING, 3)
    assert np.array_equal(stream.shifted(m).normals(10, 50), stream.normals(10 + m, 50 + m))


def test_domains_are_independent_keys():
    assert stream_key(5, DRIVING) != stream_key(5, WIENER)
    n = 100_000
    a = NoiseStream(5, DRIVING, 1).normals(0, n)[:, 0]
    b = NoiseStream(5, WIENER, 1).normals(0, n)[:, 0]
    assert abs(np.corrcoef(a, b)[0, 1]) < 5.0 / np.sqrt(n)
    # sign quadrants are equally likely for independent pairs
    quadrants = np.bincount(2 * (a > 0) + (b > 0), minlength=4) / n
    assert np.all(np.abs(quadrants - 0.25) < 5.0 * np.sqrt(0.25 * 0.75 / n))


def test_neighbouring_point_streams_are_uncorrelated():
    n = 100_000
    block = stream_normals(derive_seeds(9, 2), WIENER, 1, 0, n)[:, :, 0]
    assert abs(np.corrcoef(block[0], block[1])[0, 1]) < 5.0 / np.sqrt(n)


def test_normals_are_standard():
    z = NoiseStream(77, WIENER, 1).normals(0, 20000)[:, 0]
    ok, p_value = ks_pass(z, norm.cdf)
    assert ok, p_value
    assert np.all(np.isfinite(z))


def test_stream_normals_stacks_per_point_streams():
    seeds = derive_seeds(3, 4)
    block = stream_normals(seeds, WIENER, 2, 5, 25)
    assert block.shape == (4, 20, 2)
    assert np.array_equal(block[2], NoiseStream(int(seeds[2]), WIENER, 2).normals(5, 25))


def test_empty_windows():
    assert NoiseStream(1, WIENER, 3).normals(4, 4).shape == (0, 3)
    assert stream_normals([], WIENER, 2, 0, 5).shape == (0, 5, 2)


def test_generator_is_deterministic():
    a = generator(9, WIENER, stream_id=3).standard_normal(10)
    b = generator(9, WIENER, stream_id=3).standard_normal(10)
    c = generator(9, WIENER, stream_id=4).standard_normal(10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_derive_seeds_are_consecutive():
    seeds = derive_seeds(100, 5, start=10)
    assert seeds.tolist() == [110, 111, 112, 113, 114]


def test_check_disjoint():
    check_disjoint(1, 2)
    check_disjoint(None, None)
    with pytest.raises(ValueError):
        check_disjoint(4, 4)


def test_invalid_dimension():
    with pytest.raises(ValueError):
        NoiseStream(1, WIENER, 0)
