"""
Tests for empirical measures, distances and couplings
"""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from core.rng import WIENER, generator
from sde.measures import (
    CouplingRun,
    EmpiricalMeasure,
    GaussianDensity,
    MixingFitError,
    PseudoMetric,
    couple_gaussian_rows,
    fit_mixing_rate,
    gaussian_tv,
    histogram_binning,
    maximal_coupling,
    tv_distance,
    wasserstein_pseudo,
)


def normal_cloud(seed, n, mean=0.0, std=1.0, dim=1):
    return EmpiricalMeasure.from_points(mean + std * generator(seed, WIENER).standard_normal((n, dim)))


class TestEmpiricalMeasure:
    def test_weights_are_normalized(self):
        m = EmpiricalMeasure.from_points([1.0, 2.0, 3.0], weights=[1, 1, 2])
        assert m.weights.sum() == pytest.approx(1.0)
        assert m.mean()[0] == pytest.approx(2.25)
        assert not m.uniform

    def test_invalid_weights(self):
        with pytest.raises(ValueError):
            EmpiricalMeasure(np.zeros((2, 1)), np.array([0.7, 0.7]))
        with pytest.raises(ValueError):
            EmpiricalMeasure(np.zeros((0, 1)), np.zeros(0))

    def test_expectation_and_projection(self):
        m = normal_cloud(1, 5000)
        value, se = m.expectation(lambda x: x[:, 0] ** 2)
        assert abs(value - 1.0) <= 4 * se
        projected = m.project(lambda x: np.tanh(x[:, 0]))
        assert projected.dim == 1
        assert m.head(10).size == 10

    def test_head_equalizes_sizes_for_exact_assignment(self):
        p, q = normal_cloud(2, 50), normal_cloud(3, 40)
        with pytest.raises(ValueError, match="head"):
            wasserstein_pseudo(p, q, PseudoMetric(1.0))
        value = wasserstein_pseudo(p.head(40), q, PseudoMetric(1.0))
        assert 0.0 <= value <= 1.0
        assert np.array_equal(p.head(40).points, p.points[:40])


class TestTotalVariation:
    def test_matches_gaussian_closed_form(self):
        p = normal_cloud(3, 20000)
        q = normal_cloud(4, 20000, mean=1.0)
        assert abs(tv_distance(p, q) - gaussian_tv(0.0, 1.0, 1.0)) < 0.05

    def test_same_law_is_near_zero(self):
        assert tv_distance(normal_cloud(5, 20000), normal_cloud(6, 20000)) < 0.06

    def test_disjoint_supports(self):
        p = EmpiricalMeasure.from_points(np.zeros(100))
        q = EmpiricalMeasure.from_points(np.full(100, 5.0))
        assert tv_distance(p, q) == pytest.approx(1.0)

    def test_high_dimension_needs_projection(self):
        p = normal_cloud(7, 100, dim=4)
        q = normal_cloud(8, 100, dim=4)
        with pytest.raises(ValueError):
            tv_distance(p, q)
        assert 0.0 <= tv_distance(p, q, projection=lambda x: x[:, 0]) <= 1.0

    def test_binning_is_capped(self):
        edges = histogram_binning(normal_cloud(9, 50000), normal_cloud(10, 50000))
        assert len(edges[0]) - 1 <= 64

    def test_tails_on_opposite_sides_are_not_lumped(self):
        edges = [np.linspace(-1.0, 1.0, 5)]
        below = EmpiricalMeasure.from_points(np.full(100, -10.0))
        above = EmpiricalMeasure.from_points(np.full(100, 10.0))
        assert tv_distance(below, above, binning=edges) == pytest.approx(1.0)
        assert tv_distance(below, below, binning=edges) == 0.0

    def test_binning_axes_must_match(self):
        p = normal_cloud(19, 50)
        with pytest.raises(ValueError):
            tv_distance(p, p, binning=[np.linspace(-1, 1, 5)] * 2)

    @given(
        shifts=st.tuples(*[st.floats(-3.0, 3.0)] * 3),
        scales=st.tuples(*[st.floats(0.2, 3.0)] * 3),
    )
    def test_symmetric_and_triangle(self, shifts, scales):
        base = generator(20, WIENER).standard_normal((3, 200, 1))
        p, q, r = (EmpiricalMeasure.from_points(m + s * z) for m, s, z in zip(shifts, scales, base))
        edges = [np.linspace(-2.0, 2.0, 9)]
        pq, qp = tv_distance(p, q, binning=edges), tv_distance(q, p, binning=edges)
        assert pq == qp
        assert pq <= tv_distance(p, r, binning=edges) + tv_distance(r, q, binning=edges) + 1e-12


class TestPseudoWasserstein:
    def test_pseudo_metric_saturates(self):
        d = PseudoMetric(10.0)
        assert d(0.0, 0.05) == pytest.approx(0.5)
        assert d(0.0, 3.0) == 1.0
        with pytest.raises(ValueError):
            PseudoMetric(0.0)

    def test_identical_clouds(self):
        p = normal_cloud(11, 200)
        assert wasserstein_pseudo(p, p, PseudoMetric(5.0)) == 0.0

    @given(shift=st.floats(0.0, 2.0), n=st.floats(0.5, 20.0))
    def test_translation_bound(self, shift, n):
        p = normal_cloud(12, 64)
        q = EmpiricalMeasure.from_points(p.points + shift)
        value = wasserstein_pseudo(p, q, PseudoMetric(n))
        assert 0.0 <= value <= min(1.0, n * shift) + 1e-12

    def test_far_clouds_cost_one(self):
        p = normal_cloud(13, 600)
        q = EmpiricalMeasure.from_points(p.points + 100.0)
        assert wasserstein_pseudo(p, q, PseudoMetric(1.0)) == pytest.approx(1.0, abs=1e-6)

    def test_exact_solver_needs_equal_sizes(self):
        with pytest.raises(ValueError):
            wasserstein_pseudo(normal_cloud(14, 10), normal_cloud(15, 12), PseudoMetric(1.0))

    @given(n1=st.floats(0.1, 50.0), factor=st.floats(1.0, 10.0))
    def test_nondecreasing_in_n(self, n1, factor):
        p = normal_cloud(21, 48)
        q = normal_cloud(22, 48, mean=0.3)
        assert wasserstein_pseudo(p, q, PseudoMetric(n1)) <= wasserstein_pseudo(p, q, PseudoMetric(n1 * factor)) + 1e-12


class TestMaximalCoupling:
    def test_gaussian_coupling_probability(self):
        p, q = GaussianDensity.of(0.0, 1.0), GaussianDensity.of(1.0, 1.0)
        s1, s2, coupled = maximal_coupling(p, q, seed=3, size=20000)
        expected = 1.0 - gaussian_tv(0.0, 1.0, 1.0)
        se = math.sqrt(expected * (1 - expected) / 20000)
        assert abs(coupled.mean() - expected) <= 4 * se
        assert np.array_equal(s1[coupled], s2[coupled])
        assert abs(s1.mean()) < 0.05
        assert abs(s2.mean() - 1.0) < 0.05
        assert abs(s2.std() - 1.0) < 0.05

    def test_marginals_pass_ks_for_ten_pairs(self):
        rng = generator(23, WIENER)
        p_values = []
        for i in range(10):
            m1, m2 = rng.uniform(-2.0, 2.0, size=2)
            s1, s2 = rng.uniform(0.3, 2.0, size=2)
            a, b, _ = maximal_coupling(GaussianDensity.of(m1, s1), GaussianDensity.of(m2, s2), seed=100 + i, size=4000)
            p_values.append(stats.kstest(a[:, 0], stats.norm(m1, s1).cdf).pvalue)
            p_values.append(stats.kstest(b[:, 0], stats.norm(m2, s2).cdf).pvalue)
        # 1% level over all 20 marginals
        assert min(p_values) > 0.01 / len(p_values)

    def test_single_draw(self):
        a, b, coupled = maximal_coupling(GaussianDensity.of(0.0, 1.0), GaussianDensity.of(0.0, 1.0), seed=1)
        assert coupled
        assert a.shape == (1,)
        assert np.array_equal(a, b)

    def test_empirical_clouds_are_binned(self):
        p, q = normal_cloud(16, 5000), normal_cloud(17, 5000, mean=0.5)
        s1, s2, coupled = maximal_coupling(p, q, seed=2, size=5000)
        assert 0.5 < coupled.mean() < 0.95
        assert np.array_equal(s1[coupled], s2[coupled])

    def test_mixed_kinds_are_rejected(self):
        with pytest.raises(TypeError):
            maximal_coupling(GaussianDensity.of(0.0, 1.0), normal_cloud(18, 10), seed=1)

    def test_degenerate_rows_never_couple_apart(self):
        rng = generator(5, WIENER)
        m1 = np.array([[0.0], [0.0]])
        m2 = np.array([[1.0], [0.0]])
        x, y, coupled = couple_gaussian_rows(m1, m2, np.zeros((2, 1)), np.zeros((2, 1)), rng)
        assert coupled.tolist() == [False, True]
        assert y[0, 0] == 1.0


class TestMixingFit:
    def test_recovers_exponential_rate(self):
        t = np.linspace(0, 4, 21)
        fit = fit_mixing_rate(t, 0.8 * np.exp(-1.3 * t))
        assert fit.rate == pytest.approx(1.3)
        assert fit.c == pytest.approx(0.8)
        assert fit.r_squared == pytest.approx(1.0)

    def test_rising_curve_is_rejected(self):
        t = np.linspace(0, 1, 6)
        values = np.array([0.5, 0.4, 0.3, 0.6, 0.2, 0.1])
        with pytest.raises(MixingFitError):
            fit_mixing_rate(t, values, np.full(6, 0.01))

    def test_too_few_points(self):
        with pytest.raises(MixingFitError):
            fit_mixing_rate([0.0, 1.0, 2.0], [1.0, 0.5, 0.0])

    def test_instant_coupling_is_infinite_rate(self):
        fit = fit_mixing_rate([0.0, 1.0, 2.0], [1.0, 0.0, 0.0])
        assert math.isinf(fit.rate)

    def test_coupling_run_fractions(self):
        run = CouplingRun([0.0, 1.0, 2.0, 3.0], [0.5, 1.5, np.nan, 2.5])
        assert run.uncoupled_fraction.tolist() == [1.0, 0.75, 0.5, 0.25]
        assert run.n_pairs == 4
        assert run.pairs[2][2] is None
        assert run.to_rows()[1] == {"time": 1.0, "uncoupled_fraction": 0.75}

    def test_pairs_carry_endpoints(self):
        finals = np.arange(12.0).reshape(3, 2, 2)
        run = CouplingRun([0.0, 1.0], [0.5, np.nan, 1.0], final_states=finals)
        first, second, at = run.pairs[1]
        assert np.array_equal(first, [4.0, 5.0])
        assert np.array_equal(second, [6.0, 7.0])
        assert at is None
        assert run.pairs[0][2] == 0.5
