"""
Tests for the ergodicity experiments on the closed-form scalar example
"""

import math

import numpy as np
import pytest

from core.rng import derive_seeds
from sde.driving import OUSpec, constant_path, covering_path
from sde.integrator import LinearModel, StepScheme
from sde.oracle import exact_evo_measure, exact_tv_kernels
from sde.ergodicity import (
    FlowReport,
    SearchCapExceeded,
    ZSample,
    asf_diagnostic,
    check_consistency,
    check_flow_property,
    check_invariance,
    estimate_evo_system,
    find_k0,
    fit_driver_moments,
    krylov_bogoliubov,
    lyapunov_audit,
    mixing_certificate,
    regularity_probe,
    small_ball_probe,
    start_spread,
)
from sde.ergodicity.common import fresh_seeds, probe_directions, sigmoid_observables
from sde.ergodicity.krylov import stack_samples
from sde.ergodicity.lyapunov import lyapunov_constants
from tasks.experiments import flow_verdict
from utils.validation import mean_and_se, variance_and_se, within_se


@pytest.fixture
def estimate(unit_model, scheme, unit_path):
    return estimate_evo_system(
        unit_model, scheme, unit_path, [-2.0, -4.0, -8.0], [0.0, 0.5, 1.0], 2000, 17
    )


class TestCommon:
    def test_fresh_seeds_do_not_collide(self):
        base = set(derive_seeds(5, 1000).tolist())
        salted = [set(fresh_seeds(5, 1000, salt).tolist()) for salt in range(3)]
        assert not base & salted[0]
        assert not salted[0] & salted[1]
        assert not salted[1] & salted[2]

    def test_start_spread(self):
        one = start_spread(1, 2.0, 3)
        assert one.shape == (9, 1)
        assert np.all(np.abs(one[:-1]) == 2.0)
        assert one[-1, 0] == 0.0
        many = start_spread(5, 1.5, 3)
        assert np.allclose(np.linalg.norm(many[:-1], axis=1), 1.5)

    def test_probe_directions_are_unit(self):
        dirs = probe_directions(3, 4, 9)
        assert dirs.shape == (10, 3)
        assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)

    def test_sigmoid_observables_are_bounded(self):
        obs = sigmoid_observables(5)
        assert len(obs) == 6
        x = np.array([[-50.0] * 5, [50.0] * 5])
        for o in obs:
            values = o.fn(x)
            assert np.all((values >= 0) & (values <= 1))


class TestPullback:
    def test_matches_closed_form(self, estimate, unit_path):
        assert estimate.converged
        for t in estimate.times:
            points = estimate.measure_at(t).points[:, 0]
            exact = exact_evo_measure(float(t), unit_path)
            mean, mean_se = mean_and_se(points)
            var, var_se = variance_and_se(points)
            assert within_se(mean, exact.mean, mean_se, k=4.0)
            assert within_se(var, exact.var, var_se, k=4.0)

    def test_pullback_distances_shrink(self, estimate):
        assert estimate.distances.shape == (2, 3)
        assert np.all(estimate.distances[-1] <= estimate.distances[0] + 1e-12)
        assert len(estimate.distance_rows()) == 6

    def test_rows_and_lookup(self, estimate):
        assert len(estimate.to_rows()) == 3 * 2000
        with pytest.raises(KeyError):
            estimate.measure_at(0.25)

    def test_starts_must_precede_times(self, unit_model, scheme, unit_path):
        with pytest.raises(ValueError):
            estimate_evo_system(unit_model, scheme, unit_path, [1.0, -1.0], [0.0, 1.0], 10, 1)
        with pytest.raises(ValueError):
            estimate_evo_system(unit_model, scheme, unit_path, [-1.0, -2.0], [1.0, 0.0], 10, 1)

    def test_shift_consistency_is_bit_exact(self, unit_model, scheme, unit_path):
        report = check_consistency(unit_model, scheme, unit_path, [-2.0, -4.0], 1.0, 0.5, 64, 3)
        assert report.identical
        assert report.max_abs_difference == 0.0


class TestFlow:
    def test_flow_property_holds(self, estimate, unit_model, scheme):
        report = check_flow_property(estimate, unit_model, scheme, seed=4)
        assert report.passed
        assert len(report.checks) == 3 * 2
        assert len(report.to_rows()) == 6

    def test_wrong_realization_breaks_the_flow(self, estimate, unit_model, scheme):
        fake = constant_path(OUSpec.uniform(1), [3.0], 0.0, 1.0, scheme.dt)
        report = check_flow_property(estimate, unit_model, scheme, seed=4, driving_override=fake)
        assert not report.passed
        assert report.max_z_score > 10

    def test_other_stationary_realization_breaks_the_flow(self, estimate, unit_model, unit_spec, scheme):
        mismatched = covering_path(unit_spec, -8.0, 1.0, scheme.dt, 2025)
        report = check_flow_property(estimate, unit_model, scheme, seed=4, driving_override=mismatched)
        assert not report.passed
        assert report.max_z_score > 3

    @pytest.mark.parametrize(
        "flow_ok,control_ok,control_z,expected",
        [
            (True, False, 12.0, True),
            (True, False, 6.0, False),
            (True, True, 2.0, False),
            (False, False, 50.0, False),
        ],
    )
    def test_verdict_needs_a_clear_control_failure(self, flow_ok, control_ok, control_z, expected):
        report = FlowReport(checks=[], pass_fraction=1.0, required_fraction=0.9, passed=flow_ok, max_z_score=1.0)
        control = FlowReport(
            checks=[], pass_fraction=0.0, required_fraction=0.9, passed=control_ok, max_z_score=control_z
        )
        assert flow_verdict(report, control, 10.0) is expected
        assert flow_verdict(report, None, 10.0) is flow_ok

    def test_needs_two_times(self, unit_model, scheme, unit_path):
        single = estimate_evo_system(unit_model, scheme, unit_path, [-2.0], [0.0], 50, 1)
        with pytest.raises(ValueError):
            check_flow_property(single, unit_model, scheme)


class TestKrylovBogoliubov:
    def test_samples_and_invariance(self, unit_model, scheme, unit_spec):
        samples = krylov_bogoliubov(unit_model, scheme, unit_spec, 1000.0, 10.0, 2.0, 5, t_hist=1.0)
        assert len(samples) == 496
        assert samples[0].h.length == 101
        x, windows = stack_samples(samples)
        var_x, _ = variance_and_se(x[:, 0])
        var_y, _ = variance_and_se(windows[:, -1, 0])
        assert abs(var_x - 0.75) < 0.2
        assert abs(var_y - 0.5) < 0.15

        report = check_invariance(samples, unit_model, scheme, unit_spec, 1.0, seed=6, k=4.0)
        assert report.n_samples == 496
        assert len(report.checks) == 10
        assert report.passed

    def test_burn_in_must_precede_horizon(self, unit_model, scheme, unit_spec):
        with pytest.raises(ValueError):
            krylov_bogoliubov(unit_model, scheme, unit_spec, 5.0, 5.0, 1.0, 1)

    def test_sample_validation(self, unit_path):
        window = unit_path.window_at(0.0, 0.5)
        with pytest.raises(ValueError):
            ZSample(np.array([np.nan]), window)
        with pytest.raises(ValueError):
            ZSample(np.zeros((2, 2)), window)


class TestASF:
    def test_linear_model_respects_synchronous_bound(self, unit_model, scheme, unit_spec):
        drivings = [covering_path(unit_spec, 0.0, 1.0, scheme.dt, seed) for seed in (1, 2)]
        table = asf_diagnostic(
            unit_model, scheme, [0.3], [0.0, 0.2, 1.0], [1.0, 5.0], [0.5, 1.0], drivings, 64, 8
        )
        assert len(table.entries) == 3 * 2 * 2
        assert table.n_probes == 2 + 2
        for entry in table.entries:
            assert entry.value <= entry.linear_bound + 1e-12
            if entry.gamma == 0.0:
                assert entry.value == 0.0
        assert table.lookup(1.0, 5.0, 1.0).linear_bound == pytest.approx(min(1.0, 5 * math.exp(-1.0)))

    def test_cloud_size_is_capped(self, unit_model, scheme, unit_spec):
        drivings = [covering_path(unit_spec, 0.0, 1.0, scheme.dt, 1)]
        with pytest.raises(ValueError):
            asf_diagnostic(unit_model, scheme, [0.0], [0.1], [1.0], [0.5], drivings, 600, 1)


class TestLyapunov:
    def test_driver_moments(self, unit_spec):
        kappa1, kappa2 = fit_driver_moments(unit_spec, 100_000, 3)
        assert kappa1 == pytest.approx(2.0, rel=0.05)
        assert kappa2 == pytest.approx(0.5, rel=0.05)

    def test_constants_for_unit_example(self, unit_model):
        c = lyapunov_constants(unit_model, 2.0, 0.5, 1.0)
        assert c.kappa5 == 1.0
        assert c.alpha == pytest.approx(math.exp(-1) - math.exp(-2))
        assert c.delta == pytest.approx(2.0 / (3.0 * c.alpha))
        assert c.kappa4 == pytest.approx(2.0 + 1.0 + c.delta * 0.5)

    def test_noiseless_return_time(self):
        model = LinearModel.scalar(a=-1.0, gain=1.0, sigma=0.0)
        spec = OUSpec.uniform(1, drift=-1.0, scale=0.0)
        report = lyapunov_audit(model, StepScheme(dt=0.01), spec, 0.5, 1, 10, 3, n_periods=10, x0=[10.0])
        assert report.kappa2 == 0.0
        assert report.drift_holds
        assert report.stopping_time_tail[:5] == [1.0] * 5
        assert report.stopping_time_tail[5] == 0.0
        assert report.censored_fraction == 0.0

    def test_drift_and_tail(self, unit_model, scheme, unit_spec):
        report = lyapunov_audit(unit_model, scheme, unit_spec, 0.1, 1, 2000, 4, n_periods=60, x0=[5.0])
        assert report.drift_holds
        tail = np.asarray(report.stopping_time_tail)
        assert tail[0] == 1.0
        assert np.all(np.diff(tail) <= 0)
        assert tail[-1] < 0.05
        assert len(report.to_rows()) == 61


class TestMixing:
    def test_coupling_certificate_rate(self, unit_model, scheme, unit_spec):
        drivings = [covering_path(unit_spec, 0.0, 4.0, scheme.dt, seed) for seed in (1, 2, 3, 4)]
        cert = mixing_certificate(
            unit_model, scheme, [1.0], [0.0], drivings, None, 4.0, 300, 9, record_every=0.2
        )
        assert cert.coupling_attempted
        assert cert.curves.shape == (4, 21)
        assert cert.curve[0] == pytest.approx(1.0)
        assert cert.rate_positive
        assert 0.5 <= cert.fit.rate <= 2.0
        assert cert.uncoupled[:, -1].mean() < cert.uncoupled[:, 0].mean()
        assert len(cert.to_rows()) == 21

    def test_ball_blocks_coupling(self, unit_model, scheme, unit_spec):
        drivings = [covering_path(unit_spec, 0.0, 1.0, scheme.dt, 1)]
        cert = mixing_certificate(
            unit_model, scheme, [1.0], [0.0], drivings, 0.1, 1.0, 20, 9, ball=0.0
        )
        assert not cert.coupling_attempted
        assert np.all(cert.uncoupled == 1.0)

    def test_unknown_observable(self, unit_model, scheme, unit_spec):
        drivings = [covering_path(unit_spec, 0.0, 1.0, scheme.dt, 1)]
        with pytest.raises(ValueError):
            mixing_certificate(unit_model, scheme, [1.0], [0.0], drivings, None, 1.0, 5, 1, observable="cube")


class TestSmallBall:
    def test_k0_matches_decay(self, unit_model, scheme):
        starts = 2.0 * probe_directions(1, 2, 1)
        k0, ends = find_k0(unit_model, scheme, starts, 0.25, 1.0)
        assert k0 == math.ceil(math.log(2 * 2.0 / 0.5))
        assert np.all(np.abs(ends) <= 0.25)

    def test_search_cap(self, scheme):
        frozen = LinearModel.scalar(a=0.0, gain=1.0, sigma=1.0)
        with pytest.raises(SearchCapExceeded):
            find_k0(frozen, scheme, np.array([[1.0]]), 0.1, 1.0, cap=5)

    def test_small_ball_probability_is_positive(self, unit_model, scheme, unit_spec):
        report = small_ball_probe(unit_model, scheme, unit_spec, 2.0, 0.5, 1.0, 2000, 5)
        assert report.K0 == 3
        assert report.irreducible
        assert 0.0 < report.alpha_hat < 1.0
        assert report.ci_low <= report.alpha_hat <= report.ci_high

    def test_radii_are_checked(self, unit_model, scheme, unit_spec):
        with pytest.raises(ValueError):
            small_ball_probe(unit_model, scheme, unit_spec, 0.5, 1.0, 1.0, 10, 1)

    def test_regularity(self, unit_model, scheme, unit_path):
        report = regularity_probe(unit_model, scheme, [1.0], [0.0], 0.0, 1.0, unit_path, 4000, 7)
        assert report.regular
        assert not report.projected
        assert abs(report.tv - exact_tv_kernels(1.0, 0.0, 0.0, 1.0)) < 0.15
