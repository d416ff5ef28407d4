#!/usr/bin/env python3
"""
System validation for the ergodicity lab

Checks the numerical pipeline end to end:
1. Counter-based noise streams replay bit-exactly
2. The integrator matches the closed-form scalar kernel
3. The truncated Navier-Stokes nonlinearity conserves energy and enstrophy
4. Ensemble results do not depend on the worker count
5. Complete experiment runs through the dispatcher

Usage:
    python3 scripts/validate_system.py --mode quick|full [--quiet]

    quick: numerical health checks (under 30 seconds)
    full:  adds worker independence and complete oracle-validate / evo-pullback runs
"""

from pathlib import Path
from typing import Callable, Dict, List, Tuple
import argparse
import sys
import tempfile

import numpy as np

# Project root on the import path
ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

LEVEL_MARKERS = {
    "INFO": "ℹ️ ",
    "PASS": "✅",
    "FAIL": "❌",
    "WARN": "⚠️ ",
    "CHECK": "🧪",
}


class CheckFailed(Exception):
    """Raised by a check whose numbers are off; the message goes into the summary"""


class SystemValidator:
    """Runs named checks, records PASS/FAIL per check and prints a summary."""

    def __init__(self, verbose: bool = True):
        self.verbose = verbose
        self.outcomes: Dict[str, bool] = {}
        self.failures: List[str] = []

    def say(self, message: str, level: str = "INFO"):
        if self.verbose:
            print(f"{LEVEL_MARKERS.get(level, '')} {message}")

    def _check(self, name: str, fn: Callable[[], str]) -> bool:
        self.say(f"{name}...", "CHECK")
        try:
            detail = fn()
        except CheckFailed as e:
            self.failures.append(f"{name}: {e}")
            self.say(str(e), "FAIL")
            return False
        except Exception as e:
            self.failures.append(f"{name}: {type(e).__name__}: {e}")
            self.say(f"crashed with {type(e).__name__}: {e}", "FAIL")
            return False
        self.say(detail, "PASS")
        return True

    # ======================
    # Checks
    # ======================

    def noise_replay(self) -> str:
        from core.rng import WIENER, stream_normals

        full = stream_normals([7], WIENER, 3, 0, 500)[0]
        window = stream_normals([7], WIENER, 3, 123, 200)[0]
        if not np.array_equal(full[123:200], window):
            raise CheckFailed("window [123, 200) differs from the same slice of [0, 500)")
        return "noise windows replay bit-exactly"

    def oracle_kernel(self) -> str:
        from sde.driving import covering_path
        from sde.integrator import StepScheme, sample_kernel
        from sde.oracle import example_driving_spec, example_model, exact_kernel
        from utils.validation import mean_and_se, variance_and_se, within_se

        scheme = StepScheme(dt=0.01)
        driving = covering_path(example_driving_spec(), -1.0, 1.0, scheme.dt, 11)
        sample = sample_kernel(example_model(), scheme, [0.5], -1.0, 1.0, driving, 4000, 101)
        exact = exact_kernel(0.5, -1.0, 1.0, driving)
        mean, mean_se = mean_and_se(sample.points[:, 0])
        var, var_se = variance_and_se(sample.points[:, 0])
        detail = f"mean {mean:.4f} vs {exact.mean:.4f}, var {var:.4f} vs {exact.var:.4f}"
        if not (within_se(mean, exact.mean, mean_se, 4.0) and within_se(var, exact.var, var_se, 4.0)):
            raise CheckFailed(f"moments outside 4 SE of the closed form ({detail})")
        return detail

    def ns_conservation(self) -> str:
        from sde.navier_stokes import NSModelSpec, NavierStokesModel, SpectralGrid, conservation_audit, initial_state

        grid = SpectralGrid(16)
        omega = grid.unpack(initial_state(NavierStokesModel(NSModelSpec(), grid), 1.0, 5))
        report = conservation_audit(grid, omega, 1e-3, 0.2)
        detail = f"energy drift {report.energy_drift:.2e}, enstrophy drift {report.enstrophy_drift:.2e}"
        if not report.passed(1e-8):
            raise CheckFailed(f"invariants drift ({detail})")
        return detail

    def worker_independence(self) -> str:
        from core.pool import WorkerPool
        from core.rng import derive_seeds
        from sde.driving import covering_path
        from sde.integrator import StepScheme, evolve_points
        from sde.oracle import example_driving_spec, example_model

        model, scheme = example_model(), StepScheme(dt=0.01)
        driving = covering_path(example_driving_spec(), 0.0, 1.0, scheme.dt, 3)
        points = np.linspace(-1, 1, 400).reshape(-1, 1)
        seeds = derive_seeds(9, len(points))
        serial = evolve_points(model, scheme, points, 0.0, 1.0, driving, seeds)
        pool = WorkerPool(2)
        try:
            parallel = evolve_points(model, scheme, points, 0.0, 1.0, driving, seeds, pool=pool)
        finally:
            pool.close()
        gap = float(np.max(np.abs(serial - parallel)))
        if gap > 1e-12:
            raise CheckFailed(f"2 workers changed results by {gap:.2e}")
        return f"1 vs 2 workers agree (max gap {gap:.1e})"

    def experiment(self, config_name: str) -> Callable[[], str]:
        def run() -> str:
            from api.models import load_experiment_config
            from api.routes import EXIT_PASS, run_experiment

            config = load_experiment_config(str(ROOT / "configs" / f"{config_name}.json"))
            with tempfile.TemporaryDirectory() as out:
                code = run_experiment(config, out)
                written = sorted(p.name for p in Path(out).iterdir())
            if code != EXIT_PASS:
                raise CheckFailed(f"{config.experiment} exited with {code}")
            return f"{config.experiment} passed, wrote {', '.join(written)}"

        return run

    # ======================
    # Modes
    # ======================

    def _quick_checks(self) -> List[Tuple[str, Callable[[], str]]]:
        return [
            ("Noise replay", self.noise_replay),
            ("Oracle kernel", self.oracle_kernel),
            ("NS conservation", self.ns_conservation),
        ]

    def _run(self, title: str, checks: List[Tuple[str, Callable[[], str]]]) -> bool:
        self.say(f"{title} ({len(checks)} checks)", "INFO")
        for name, fn in checks:
            self.outcomes[name] = self._check(name, fn)
        return all(self.outcomes.values())

    def run_quick_tests(self) -> bool:
        return self._run("Quick validation", self._quick_checks())

    def run_full_tests(self) -> bool:
        return self._run("Full validation", self._quick_checks() + [
            ("Worker independence", self.worker_independence),
            ("oracle-validate run", self.experiment("oracle_validate")),
            ("evo-pullback run", self.experiment("evo_pullback")),
        ])

    def print_summary(self) -> bool:
        """Always printed, also in quiet mode"""
        passed = sum(self.outcomes.values())
        print("\n" + "-" * 48)
        for name, ok in self.outcomes.items():
            print(f"{LEVEL_MARKERS['PASS' if ok else 'FAIL']} {name}")
        print(f"{passed}/{len(self.outcomes)} checks passed")
        for failure in self.failures:
            print(f"   {failure}")
        return passed == len(self.outcomes)


def main():
    parser = argparse.ArgumentParser(description="Validate the ergodicity lab numerics")
    parser.add_argument(
        "--mode",
        choices=["quick", "full"],
        default="quick",
        help="quick: numerical health checks; full: adds worker independence and complete runs",
    )
    parser.add_argument("--quiet", action="store_true", help="Only print the summary")
    args = parser.parse_args()

    validator = SystemValidator(verbose=not args.quiet)
    success = validator.run_quick_tests() if args.mode == "quick" else validator.run_full_tests()
    validator.print_summary()
    sys.exit(0 if success else 1)


if __name__ == "__main__":
    main()
