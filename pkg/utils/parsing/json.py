import json
import logging
from pathlib import Path
from typing import Union

import json5

logger = logging.getLogger(__name__)


class ConfigParseError(ValueError):
    """Raised when a config document cannot be parsed by any layer"""


# Layered JSON Parsing Function
def parse_config_text(text: str, source: str = "<string>") -> dict:
    """
    Multi-layered parsing of a configuration document.

    Attempts to parse through two strategies:
    1. Standard json.loads() (machine-written configs and manifests)
    2. json5 parser (hand-written configs with comments and trailing commas)

    Args:
        text: Raw document text
        source: Name used in log and error messages

    Returns:
        Parsed dictionary

    Raises:
        ConfigParseError: If both layers fail or the top level is not an object
    """
    errors = []

    # Layer 1: standard JSON
    try:
        result = json.loads(text)
        logger.debug(f"✅ {source}: standard JSON parsing succeeded")
    except json.JSONDecodeError as e:
        errors.append(f"JSON: {e}")
        logger.debug(f"🔧 {source}: standard JSON failed ({e}), trying json5")

        # Layer 2: json5 tolerates comments and trailing commas
        try:
            result = json5.loads(text)
            logger.info(f"✅ {source}: parsed as JSON5")
        except Exception as e5:
            errors.append(f"JSON5: {e5}")
            logger.error(f"❌ {source}: all parsers failed: {'; '.join(errors)}")
            raise ConfigParseError(f"cannot parse {source}: {'; '.join(errors)}") from e5

    if not isinstance(result, dict):
        raise ConfigParseError(f"{source}: top level must be an object")
    return result


def load_config_file(path: Union[str, Path]) -> dict:
    """Read and parse a JSON/JSON5 config or manifest file"""
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))
