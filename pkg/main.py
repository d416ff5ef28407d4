"""
Ergodicity Lab - Main Entry Point

Batch runner for numerical experiments on stochastic evolution equations
driven by a white noise and an Ornstein-Uhlenbeck colored noise. Loads a JSON
config (or a previous run's manifest), runs the named experiment and writes
results.csv, report.json and manifest.json.

Usage:
    python main.py run configs/oracle_validate.json [--workers N] [--out DIR] [--seed-override K]
"""

from typing import List, Optional
import argparse
import logging
import sys

from dotenv import load_dotenv
from pydantic import ValidationError

# Load environment variables before settings are read
load_dotenv()

from config import get_log_level, get_worker_count  # noqa: E402
from api.models import ConfigError, load_experiment_config  # noqa: E402
from api.routes import EXIT_ERROR, run_experiment  # noqa: E402
from core.pool import close_worker_pool, get_worker_pool  # noqa: E402
from utils.parsing.json import ConfigParseError  # noqa: E402

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ergodicity-lab", description=__doc__.split("\n\n")[0])
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run one experiment from a config or manifest file")
    run.add_argument("config", help="Experiment config JSON, or a manifest.json from a previous run")
    run.add_argument("--workers", type=int, default=None, help="Worker processes (default or 0: WORKERS setting)")
    run.add_argument("--out", default=None, help="Output directory (default: config output_dir or OUTPUT_DIR)")
    run.add_argument(
        "--seed-override",
        type=int,
        default=None,
        help="Replace the seeds with master=K, driving=K+1, wiener=K+2",
    )
    return parser


def configure_logging(level: Optional[str] = None) -> None:
    level = level or get_log_level()
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()

    try:
        config = load_experiment_config(args.config, args.seed_override)
    except ConfigError as e:
        logger.error(f"❌ Invalid configuration at {e.field}: {e.message}")
        return EXIT_ERROR
    except (ConfigParseError, ValidationError, OSError) as e:
        logger.error(f"❌ Could not load {args.config}: {e}")
        return EXIT_ERROR

    workers = args.workers if args.workers else get_worker_count()
    pool = get_worker_pool(workers)
    try:
        return run_experiment(config, args.out, pool)
    finally:
        close_worker_pool()


if __name__ == "__main__":
    sys.exit(main())
