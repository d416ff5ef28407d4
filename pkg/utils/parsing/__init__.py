# Parsing subpackage - JSON/JSON5 config parsing
from .json import ConfigParseError, load_config_file, parse_config_text

__all__ = [
    "ConfigParseError",
    "load_config_file",
    "parse_config_text",
]
