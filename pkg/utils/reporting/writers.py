#!/usr/bin/env python3
"""
Result writers for experiment runs.

Every run directory holds:
- results.csv: fixed per-experiment schema (docs/RESULTS_SCHEMA.md)
- report.json: the experiment report plus pass/fail verdict
- manifest.json: resolved config, seeds, git describe, wall time, workers and
  package versions; passing it back to `run` reproduces the outputs
"""

from importlib import metadata
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union
import csv
import json
import logging
import math
import platform
import subprocess

import numpy as np

logger = logging.getLogger(__name__)

TRACKED_PACKAGES = ["numpy", "scipy", "POT", "pydantic", "pydantic-settings", "json5"]


def _plain(value):
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def write_csv(rows: Iterable[dict], path: Union[str, Path], columns: Optional[List[str]] = None) -> Path:
    """
    Write dict rows to CSV.

    Args:
        rows: One dict per row
        path: Output file
        columns: Column order (default: keys of the first row, then any new keys)

    Returns:
        Path written
    """
    path = Path(path)
    rows = [_plain(r) for r in rows]
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
    logger.debug(f"📝 Wrote {len(rows)} rows to {path}")
    return path


def write_json(data: dict, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_plain(data), indent=2, sort_keys=False) + "\n", encoding="utf-8")
    return path


def git_describe(cwd: Optional[Union[str, Path]] = None) -> str:
    """`git describe --always --dirty`, or "unknown" outside a repository"""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=cwd,
            capture_output=True,
            text=True,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def package_versions(packages: Iterable[str] = TRACKED_PACKAGES) -> dict:
    versions = {"python": platform.python_version()}
    for name in packages:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions


def build_manifest(config: dict, wall_time: float, workers: int, passed: Optional[bool]) -> dict:
    return {
        "config": config,
        "seeds": config.get("seeds"),
        "git_describe": git_describe(Path(__file__).resolve().parent),
        "wall_time_seconds": round(wall_time, 3),
        "workers": workers,
        "passed": passed,
        "versions": package_versions(),
    }


def write_run(
    out_dir: Union[str, Path],
    rows: List[dict],
    report: dict,
    manifest: dict,
    columns: Optional[List[str]] = None,
    artifacts: Optional[Dict[str, Union[dict, List[dict]]]] = None,
) -> Path:
    """
    Write results.csv, report.json and manifest.json into out_dir.

    Args:
        artifacts: extra files by name; `.json` names take a dict, `.csv` names take rows
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(rows, out / "results.csv", columns)
    write_json(report, out / "report.json")
    write_json(manifest, out / "manifest.json")
    for name, content in (artifacts or {}).items():
        if name.endswith(".json"):
            write_json(content, out / name)
        elif name.endswith(".csv"):
            write_csv(content, out / name)
        else:
            raise ValueError(f"unsupported artifact type: {name}")
    logger.info(f"✅ Results written to {out}")
    return out
