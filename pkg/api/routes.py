"""
Experiment dispatch for the lab CLI
Runs one configured experiment, writes its results and maps the outcome to an exit code
"""

from pathlib import Path
from typing import Optional, Union
import logging
import time
import traceback

from pydantic import ValidationError

from config import get_output_dir
from api.models import ConfigError, ExperimentConfig, ExperimentReport
from core.pool import WorkerPool
from sde.driving import CoverageError
from sde.integrator import DivergenceError
from tasks.experiments import EXPERIMENT_RUNNERS, ExperimentOutcome, run_experiment as run_outcome
from utils.reporting import build_manifest, write_run

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_PROPERTY_FAILURE = 2


def output_dir_for(config: ExperimentConfig, out: Optional[Union[str, Path]] = None) -> Path:
    """--out wins over config.output_dir, which wins over OUTPUT_DIR/<experiment>"""
    if out is not None:
        return Path(out)
    if config.output_dir:
        return Path(config.output_dir)
    return Path(get_output_dir()) / config.experiment


def build_report(config: ExperimentConfig, outcome: ExperimentOutcome) -> ExperimentReport:
    return ExperimentReport(
        experiment=config.experiment,
        model=config.model.kind,
        passed=bool(outcome.passed),
        summary=outcome.summary,
        warnings=outcome.warnings,
    )


def run_experiment(
    config: ExperimentConfig,
    out: Optional[Union[str, Path]] = None,
    pool: Optional[WorkerPool] = None,
) -> int:
    """
    Run a validated experiment and write results.csv, report.json and manifest.json.

    Returns:
        0 when every property holds, 2 on a property failure, 1 on any error
    """
    out_dir = output_dir_for(config, out)
    workers = pool.workers if pool is not None else 1
    started = time.time()

    try:
        outcome = run_outcome(config, pool)
    except DivergenceError as e:
        logger.error(f"❌ Trajectory diverged: {e}")
        return EXIT_ERROR
    except CoverageError as e:
        logger.error(f"❌ Driving path does not cover the requested interval: {e}")
        return EXIT_ERROR
    except (ConfigError, ValidationError) as e:
        logger.error(f"❌ Invalid configuration: {e}")
        return EXIT_ERROR
    except Exception as e:
        logger.error(f"❌ {config.experiment} failed: {type(e).__name__}: {e}")
        traceback.print_exc()
        return EXIT_ERROR

    elapsed = time.time() - started
    report = build_report(config, outcome)
    manifest = build_manifest(config.model_dump(mode="json"), elapsed, workers, report.passed)
    write_run(out_dir, outcome.rows, report.model_dump(mode="json"), manifest, outcome.columns, outcome.artifacts)

    for warning in report.warnings:
        logger.warning(f"⚠️  {warning}")
    logger.info(f"⏱️  {config.experiment} finished in {elapsed:.2f}s")
    if report.passed:
        logger.info(f"✅ {config.experiment}: all properties hold")
        return EXIT_PASS
    logger.info(f"❌ {config.experiment}: property failure (see {out_dir / 'report.json'})")
    return EXIT_PROPERTY_FAILURE


__all__ = [
    "EXIT_PASS",
    "EXIT_ERROR",
    "EXIT_PROPERTY_FAILURE",
    "EXPERIMENT_RUNNERS",
    "output_dir_for",
    "build_report",
    "run_experiment",
]
