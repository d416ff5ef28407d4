# Utils package - Utility modules organized by domain
# Import from subpackages for convenience

from .parsing.json import load_config_file, parse_config_text
from .reporting.writers import write_csv, write_json, write_run
from .validation.statistics import mean_and_se, within_se

__all__ = [
    "load_config_file",
    "parse_config_text",
    "write_csv",
    "write_json",
    "write_run",
    "mean_and_se",
    "within_se",
]
