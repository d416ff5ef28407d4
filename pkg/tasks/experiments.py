"""
Experiment runners for the ergodicity lab
Each runner takes a validated ExperimentConfig and returns an ExperimentOutcome
holding the CSV rows, the report summary and the pass/fail verdict
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Union
import logging
import math

import numpy as np

from api.models import ConfigError, ExperimentConfig
from core.pool import WorkerPool
from core.rng import PROBE, check_disjoint, derive_seeds, generator
from sde.driving import covering_path
from sde.integrator import EnsembleState, growth_probe, sample_kernel
from sde.oracle import exact_evo_measure, exact_kernel, exact_tv_kernels, stationary_marginal
from sde.ergodicity import (
    FlowReport,
    asf_diagnostic,
    check_consistency,
    check_flow_property,
    check_invariance,
    estimate_evo_system,
    krylov_bogoliubov,
    lyapunov_audit,
    mixing_certificate,
    regularity_probe,
    small_ball_probe,
)
from sde.ergodicity.krylov import stack_samples
from utils.validation import mean_and_se, variance_and_se, within_se

logger = logging.getLogger(__name__)


class UnsupportedModelError(ValueError):
    """Raised when an experiment is requested for a model family it does not support"""


@dataclass
class ExperimentOutcome:
    passed: bool
    rows: List[dict]
    summary: dict
    columns: Optional[List[str]] = None
    warnings: List[str] = field(default_factory=list)
    # extra files for the run directory: name.json -> dict, name.csv -> rows
    artifacts: Dict[str, Union[dict, List[dict]]] = field(default_factory=dict)


def _progress(step: int, total: int, message: str) -> None:
    logger.info(f"📊 Step {step}/{total}: {message}")


def _require_example(config: ExperimentConfig, name: str) -> None:
    if config.model.kind != "example1d":
        raise UnsupportedModelError(f"{name} needs model.kind = example1d")


def _require_ns(config: ExperimentConfig, name: str) -> None:
    if config.model.kind != "ns2d":
        raise UnsupportedModelError(f"{name} needs model.kind = ns2d")


def _start_state(config: ExperimentConfig, model, key: str, default_energy: float) -> np.ndarray:
    """Start point from params[key], or a smooth random state of the given energy for ns2d"""
    value = config.param(key, None)
    if value is not None:
        return np.atleast_1d(np.asarray(value, dtype=float))
    if config.model.kind == "ns2d":
        from sde.navier_stokes import initial_state

        if default_energy == 0:
            return np.zeros(model.dim)
        return initial_state(model, default_energy, config.seeds.master)
    return np.full(model.dim, math.sqrt(default_energy))


# ======================
# oracle-validate
# ======================

def run_oracle_validate(config: ExperimentConfig, pool: Optional[WorkerPool] = None) -> ExperimentOutcome:
    """Integrator Monte Carlo against the closed-form kernel moments on random (x, s, t)"""
    _require_example(config, "oracle-validate")
    model, spec = config.model.build()
    scheme = config.numerics.step_scheme()
    dt, N = scheme.dt, config.numerics.N
    n_tuples = int(config.param("n_tuples", 20))
    k = float(config.param("k_se", 3.0))
    s_min = config.numerics.horizon("s_min", -2.0)
    max_span = config.numerics.horizon("max_span", 2.0)

    _progress(1, 2, f"drawing {n_tuples} (x, s, t) tuples")
    rng = generator(config.seeds.master, PROBE)
    span_steps = int(round(max_span / dt))
    start_steps = int(round(-s_min / dt))
    tuples = []
    for _ in range(n_tuples):
        ks = -int(rng.integers(0, start_steps + 1))
        kt = ks + int(rng.integers(max(1, span_steps // 20), span_steps + 1))
        tuples.append((float(rng.uniform(-2.0, 2.0)), ks * dt, kt * dt))
    driving = covering_path(spec, s_min, max(t for _, _, t in tuples), dt, config.seeds.driving)

    _progress(2, 2, f"sampling {N} paths per tuple")
    rows = []
    for i, (x, s, t) in enumerate(tuples):
        exact = exact_kernel(x, s, t, driving)
        sample = sample_kernel(model, scheme, [x], s, t, driving, N, config.seeds.wiener + i * N, pool)
        mean, mean_se = mean_and_se(sample.points[:, 0])
        var, var_se = variance_and_se(sample.points[:, 0])
        ok = within_se(mean, exact.mean, mean_se, k) and within_se(var, exact.var, var_se, k)
        rows.append({
            "index": i, "x": x, "s": s, "t": t,
            "mean": mean, "mean_se": mean_se, "oracle_mean": exact.mean,
            "var": var, "var_se": var_se, "oracle_var": exact.var,
            "passed": ok,
        })
    n_pass = sum(r["passed"] for r in rows)
    return ExperimentOutcome(
        passed=n_pass == n_tuples,
        rows=rows,
        summary={"tuples": n_tuples, "passes": n_pass, "pass_label": f"{n_pass}/{n_tuples}", "k_se": k},
        artifacts={"driving.json": driving.to_json()},
    )


# ======================
# evo-pullback / flow-check
# ======================

def _pullback_setup(config: ExperimentConfig):
    model, spec = config.model.build()
    scheme = config.numerics.step_scheme()
    t_grid = config.numerics.horizon_list("t_grid", [0.0, 0.5, 1.0, 1.5, 2.0])
    s_list = config.numerics.horizon_list("s_list", [-2.0, -4.0, -6.0, -8.0])
    driving = covering_path(spec, min(s_list), max(t_grid), scheme.dt, config.seeds.driving)
    return model, spec, scheme, t_grid, s_list, driving


def _estimate(config, model, scheme, driving, s_list, t_grid, pool):
    return estimate_evo_system(
        model,
        scheme,
        driving,
        s_list,
        t_grid,
        config.numerics.N,
        config.seeds.wiener,
        rho1=float(config.param("rho1", 1.0)),
        tolerance=float(config.param("tolerance", 0.05)),
        pool=pool,
    )


def _ensemble_rows(est, driving) -> List[dict]:
    """One row per point of every estimated mu_t"""
    rows = []
    for t, m in zip(est.times, est.measures):
        rows += EnsembleState(float(t), m.points, driving).to_rows()
    return rows


def run_evo_pullback(config: ExperimentConfig, pool: Optional[WorkerPool] = None) -> ExperimentOutcome:
    """Pullback estimate of mu_t, oracle comparison (example1d) and the shift consistency check"""
    model, spec, scheme, t_grid, s_list, driving = _pullback_setup(config)
    k = float(config.param("k_se", 3.0))
    warnings = []

    _progress(1, 2, f"pullback estimate from s={min(s_list):g}")
    est = _estimate(config, model, scheme, driving, s_list, t_grid, pool)
    if not est.converged:
        warnings.append("pullback distance stalled above tolerance")

    rows = []
    oracle_ok = True
    for t, m in zip(est.times, est.measures):
        mean, mean_se = mean_and_se(m.points[:, 0])
        var, var_se = variance_and_se(m.points[:, 0])
        row = {"t": float(t), "mean": mean, "mean_se": mean_se, "var": var, "var_se": var_se}
        if config.model.is_unit_example:
            exact = exact_evo_measure(float(t), driving)
            ok = within_se(mean, exact.mean, mean_se, k) and within_se(var, exact.var, var_se, k)
            oracle_ok = oracle_ok and ok
            row.update(oracle_mean=exact.mean, oracle_var=exact.var, passed=ok)
        rows.append(row)

    _progress(2, 2, "consistency under a time shift")
    delta = config.numerics.horizon("delta", 0.5)
    consistency = check_consistency(
        model,
        scheme,
        driving,
        s_list,
        t_grid[-1],
        delta,
        min(config.numerics.N, 256),
        config.seeds.wiener,
        rho1=float(config.param("rho1", 1.0)),
    )
    if not consistency.identical:
        warnings.append("shifted estimate is not bit-identical")

    return ExperimentOutcome(
        passed=est.converged and oracle_ok and consistency.identical,
        rows=rows,
        summary={
            "converged": est.converged,
            "pullback_distances": est.distance_rows(),
            "oracle_checked": config.model.is_unit_example,
            "oracle_passed": oracle_ok,
            "consistency": consistency.model_dump(),
        },
        warnings=warnings,
        artifacts={"driving.json": driving.to_json(), "ensemble.csv": _ensemble_rows(est, driving)},
    )


def flow_verdict(report: FlowReport, control: Optional[FlowReport], margin: float) -> bool:
    """The flow property holds and, when run, the mismatched control fails by more than `margin` SE"""
    if control is None:
        return report.passed
    return report.passed and not control.passed and control.max_z_score > margin


def run_flow_check(config: ExperimentConfig, pool: Optional[WorkerPool] = None) -> ExperimentOutcome:
    """Flow property of the pullback estimate, with a mismatched-realization control"""
    model, spec, scheme, t_grid, s_list, driving = _pullback_setup(config)
    _progress(1, 3, "pullback estimate")
    est = _estimate(config, model, scheme, driving, s_list, t_grid, pool)

    _progress(2, 3, "flow property")
    report = check_flow_property(est, model, scheme, seed=config.seeds.master, pool=pool)
    rows = [{**r, "control": False} for r in report.to_rows()]

    control = None
    margin = float(config.param("control_margin", 10.0))
    control_seed = int(config.param("control_seed", config.seeds.driving + 1))
    run_control = bool(config.param("negative_control", config.model.kind == "example1d"))
    if run_control:
        if control_seed == config.seeds.driving:
            raise ConfigError("params.control_seed", "the control realization must differ from seeds.driving")
        _progress(3, 3, f"negative control under driving realization {control_seed}")
        mismatched = covering_path(spec, min(s_list), max(t_grid), scheme.dt, control_seed)
        control = check_flow_property(
            est, model, scheme, seed=config.seeds.master, driving_override=mismatched, pool=pool
        )
        rows += [{**r, "control": True} for r in control.to_rows()]

    warnings = []
    if control is not None and not flow_verdict(report, control, margin) and report.passed:
        warnings.append(f"negative control max z {control.max_z_score:.2f} does not exceed {margin:g}")
    return ExperimentOutcome(
        passed=flow_verdict(report, control, margin),
        rows=rows,
        summary={
            "pass_fraction": report.pass_fraction,
            "required_fraction": report.required_fraction,
            "flow_passed": report.passed,
            "control_seed": None if control is None else control_seed,
            "control_margin": margin,
            "control_pass_fraction": None if control is None else control.pass_fraction,
            "control_max_z": None if control is None else control.max_z_score,
        },
        warnings=warnings,
        artifacts={"driving.json": driving.to_json()},
    )


# ======================
# krylov-bogoliubov
# ======================

def run_krylov_bogoliubov(config: ExperimentConfig, pool: Optional[WorkerPool] = None) -> ExperimentOutcome:
    """Time-averaged samples of Z and their invariance under evolution"""
    model, spec = config.model.build()
    scheme = config.numerics.step_scheme()
    num = config.numerics
    t_hist = num.t_hist if num.t_hist is not None else 2.0
    k = float(config.param("k_se", 3.0))

    _progress(1, 2, "long trajectory")
    samples = krylov_bogoliubov(
        model,
        scheme,
        spec,
        num.horizon("t_max", 2000.0),
        num.horizon("burn_in", 20.0),
        num.horizon("thin", 2.0),
        config.seeds.driving,
        t_hist=t_hist,
    )
    _progress(2, 2, f"invariance of {len(samples)} samples")
    report = check_invariance(
        samples, model, scheme, spec, num.horizon("delta", 1.0), seed=config.seeds.wiener, k=k, pool=pool
    )
    rows = report.to_rows()
    summary = {"n_samples": len(samples), "invariance_passed": report.passed, "delta": report.delta}

    passed = report.passed
    if config.model.is_unit_example:
        x, windows = stack_samples(samples)
        var_x, var_x_se = variance_and_se(x[:, 0])
        var_y, var_y_se = variance_and_se(windows[:, -1, 0])
        exact = stationary_marginal(spec)
        marginal_ok = within_se(var_x, exact.var, var_x_se, k) and within_se(
            var_y, float(spec.stationary_variance[0]), var_y_se, k
        )
        summary.update(
            x_variance=var_x,
            x_variance_se=var_x_se,
            oracle_x_variance=exact.var,
            y_variance=var_y,
            y_variance_se=var_y_se,
            marginals_passed=marginal_ok,
        )
        passed = passed and marginal_ok
    return ExperimentOutcome(passed=passed, rows=rows, summary=summary)


# ======================
# asf
# ======================

def _drivings(config: ExperimentConfig, spec, start: float, stop: float) -> list:
    seeds = derive_seeds(config.seeds.driving, config.numerics.n_drivings)
    return [covering_path(spec, start, stop, config.numerics.dt, int(s)) for s in seeds]


def run_asf(config: ExperimentConfig, pool: Optional[WorkerPool] = None) -> ExperimentOutcome:
    """ASF table; on example1d every entry must respect the synchronous-coupling bound"""
    model, spec = config.model.build()
    scheme = config.numerics.step_scheme()
    t_list = config.numerics.horizon_list("t_list", [0.5, 1.0, 2.0])
    x = _start_state(config, model, "x", 0.0)
    drivings = _drivings(config, spec, 0.0, max(t_list))
    table = asf_diagnostic(
        model,
        scheme,
        x,
        [float(g) for g in config.param("gamma_list", [0.0, 0.1, 0.5, 1.0])],
        [float(n) for n in config.param("n_list", [1.0, 10.0])],
        t_list,
        drivings,
        config.numerics.M,
        config.seeds.wiener,
        n_random=int(config.param("n_random", 2)),
        pool=pool,
    )
    k = float(config.param("k_se", 3.0))
    bound_ok = all(e.value <= e.linear_bound + k * e.stderr + 1e-12 for e in table.entries)
    zero_ok = all(e.value == 0.0 for e in table.entries if e.gamma == 0.0)
    linear = config.model.kind == "example1d"
    return ExperimentOutcome(
        passed=table.decreasing_in_gamma and zero_ok and (bound_ok or not linear),
        rows=table.to_rows(),
        summary={
            "n_probes": table.n_probes,
            "n_drivings": table.n_drivings,
            "decreasing_in_gamma": table.decreasing_in_gamma,
            "zero_radius_exact": zero_ok,
            "linear_bound_checked": linear,
            "linear_bound_passed": bound_ok,
        },
    )


# ======================
# lyapunov
# ======================

def run_lyapunov(config: ExperimentConfig, pool: Optional[WorkerPool] = None) -> ExperimentOutcome:
    """Driver moment fit, drift inequality and return-time tail"""
    model, spec = config.model.build()
    scheme = config.numerics.step_scheme()
    x0 = config.param("x0", None)
    report = lyapunov_audit(
        model,
        scheme,
        spec,
        config.numerics.horizon("T", 0.1),
        int(config.param("M", 1)),
        config.numerics.N,
        config.seeds.master,
        n_periods=int(config.param("n_periods", 60)),
        x0=x0,
        pool=pool,
    )
    summary = report.model_dump(exclude={"stopping_time_tail"})
    passed = report.drift_holds and report.exponential_tail
    if np.ptp(spec.drift) == 0:
        exact_k1 = float(-2.0 * spec.drift[0])
        exact_k2 = float(np.sum(spec.stationary_variance))
        moments_ok = abs(report.kappa1 - exact_k1) <= 0.05 * exact_k1 and (
            abs(report.kappa2 - exact_k2) <= 0.05 * exact_k2 if exact_k2 > 0 else report.kappa2 == 0
        )
        summary.update(exact_kappa1=exact_k1, exact_kappa2=exact_k2, moments_passed=moments_ok)
        passed = passed and moments_ok
    warnings = [] if report.exponential_tail else ["return-time tail is not exponential"]
    return ExperimentOutcome(passed=passed, rows=report.to_rows(), summary=summary, warnings=warnings)


# ======================
# mixing
# ======================

def run_mixing(config: ExperimentConfig, pool: Optional[WorkerPool] = None) -> ExperimentOutcome:
    """Coupling certificate over several driving realizations"""
    model, spec = config.model.build()
    scheme = config.numerics.step_scheme()
    horizon = config.numerics.horizon("horizon", 4.0)
    T = config.numerics.horizons.get("T")
    x = _start_state(config, model, "x", 1.0)
    y = _start_state(config, model, "y", 0.0)
    drivings = _drivings(config, spec, 0.0, horizon)
    record = config.numerics.horizons.get("record_every")
    cert = mixing_certificate(
        model,
        scheme,
        x,
        y,
        drivings,
        None if T is None else float(T),
        horizon,
        config.numerics.P,
        config.seeds.wiener,
        ball=float(config.param("ball", math.inf)),
        record_every=None if record is None else float(record),
        observable=str(config.param("observable", "coordinate")),
        pool=pool,
    )
    summary = cert.to_dict()
    passed = cert.rate_positive and cert.nonincreasing and cert.coupling_attempted
    if config.model.kind == "example1d" and cert.fit is not None:
        lo, hi = config.param("rate_window", [0.8, 1.2])
        in_window = lo <= cert.fit.rate <= hi
        summary["rate_in_window"] = in_window
        passed = passed and in_window
    warnings = []
    if not cert.coupling_attempted:
        warnings.append("coupling was never attempted")
    if cert.fit_error:
        warnings.append(f"mixing fit failed: {cert.fit_error}")
    return ExperimentOutcome(
        passed=passed,
        rows=cert.to_rows(),
        summary=summary,
        columns=["t", "value", "stderr", "uncoupled_fraction"],
        warnings=warnings,
        artifacts={"coupling.csv": cert.run.to_rows()},
    )


# ======================
# ns-energy
# ======================

def run_ns_energy(config: ExperimentConfig, pool: Optional[WorkerPool] = None) -> ExperimentOutcome:
    """Inviscid conservation of the truncated nonlinearity and the stochastic energy estimate"""
    _require_ns(config, "ns-energy")
    from sde.navier_stokes import (
        SpectralGrid,
        conservation_audit,
        energy_audit,
        initial_state,
        record_energy_trace,
        snapshot_rows,
    )

    model, spec = config.model.build()
    scheme = config.numerics.step_scheme()
    num = config.numerics

    _progress(1, 3, "inviscid conservation")
    cons_grid = SpectralGrid(int(config.param("conservation_n", 32)))
    cons_model, _ = config.model.model_copy(update={"n": cons_grid.n}).build()
    omega = cons_grid.unpack(initial_state(cons_model, 1.0, config.seeds.master))
    conservation = conservation_audit(
        cons_grid, omega, float(config.param("conservation_dt", 1e-3)), float(config.param("conservation_t", 1.0))
    )
    conservation_ok = conservation.passed(float(config.param("conservation_tol", 1e-8)))

    _progress(2, 3, "growth bounds")
    growth = growth_probe(model, 256, config.seeds.master)

    _progress(3, 3, f"energy estimate over {num.N} paths")
    t_end = num.horizon("t_end", 2.0)
    driving = covering_path(spec, 0.0, t_end, scheme.dt, config.seeds.driving)
    x0 = initial_state(model, float(config.param("initial_energy", 1.0)), config.seeds.master)
    trace = record_energy_trace(
        model, scheme, x0, 0.0, t_end, driving, derive_seeds(config.seeds.wiener, num.N),
        num.horizon("record_every", 0.1),
    )
    audit = energy_audit(trace)
    growth_ok = growth["max_coupling_ratio"] <= 1.0 and growth["max_diffusion_ratio"] <= 1.0
    return ExperimentOutcome(
        passed=conservation_ok and audit.passed and audit.time_average_passed and growth_ok,
        rows=audit.to_rows(),
        summary={
            "conservation": conservation.to_dict(),
            "conservation_passed": conservation_ok,
            "growth": growth,
            "energy_audit": audit.to_dict(),
        },
        columns=["t", "lhs", "stderr", "rhs"],
        artifacts={
            "driving.json": driving.to_json(),
            "snapshot.csv": snapshot_rows(model.grid, model.grid.unpack(trace.final_states[0])),
        },
    )


# ======================
# small-ball
# ======================

def run_small_ball(config: ExperimentConfig, pool: Optional[WorkerPool] = None) -> ExperimentOutcome:
    """Irreducibility toward 0 and the kernel regularity surrogate"""
    model, spec = config.model.build()
    scheme = config.numerics.step_scheme()
    T = config.numerics.horizon("T", 1.0)
    report = small_ball_probe(
        model,
        scheme,
        spec,
        float(config.param("rho1", 2.0)),
        float(config.param("delta1", 0.5)),
        T,
        config.numerics.N,
        config.seeds.master,
        pool=pool,
    )
    rows = [{"quantity": "alpha_hat", "value": report.alpha_hat, "low": report.ci_low, "high": report.ci_high}]

    t_reg = config.numerics.horizon("regularity_t", T)
    driving = covering_path(spec, 0.0, t_reg, scheme.dt, config.seeds.driving)
    x = _start_state(config, model, "x", 1.0)
    y = _start_state(config, model, "y", 0.0)
    regularity = regularity_probe(
        model, scheme, x, y, 0.0, t_reg, driving, config.numerics.N, config.seeds.wiener, pool=pool
    )
    row = {"quantity": "tv_kernels", "value": regularity.tv, "low": None, "high": None}
    if config.model.kind == "example1d":
        row["exact"] = exact_tv_kernels(float(x[0]), float(y[0]), 0.0, t_reg)
    rows.append(row)
    return ExperimentOutcome(
        passed=report.irreducible and regularity.regular,
        rows=rows,
        summary={**report.model_dump(), "regularity": regularity.model_dump()},
        columns=["quantity", "value", "low", "high", "exact"],
        artifacts={"driving.json": driving.to_json()},
    )


EXPERIMENT_RUNNERS: Dict[str, Callable[..., ExperimentOutcome]] = {
    "oracle-validate": run_oracle_validate,
    "evo-pullback": run_evo_pullback,
    "flow-check": run_flow_check,
    "krylov-bogoliubov": run_krylov_bogoliubov,
    "asf": run_asf,
    "lyapunov": run_lyapunov,
    "mixing": run_mixing,
    "ns-energy": run_ns_energy,
    "small-ball": run_small_ball,
}


def run_experiment(config: ExperimentConfig, pool: Optional[WorkerPool] = None) -> ExperimentOutcome:
    check_disjoint(config.seeds.driving, config.seeds.wiener)
    runner = EXPERIMENT_RUNNERS[config.experiment]
    logger.info(f"🚀 Running {config.experiment} on {config.model.kind}")
    return runner(config, pool)
