# Reporting subpackage - CSV/JSON result and manifest writers
from .writers import build_manifest, git_describe, package_versions, write_csv, write_json, write_run

__all__ = [
    "build_manifest",
    "git_describe",
    "package_versions",
    "write_csv",
    "write_json",
    "write_run",
]
