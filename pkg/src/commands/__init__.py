"""
Command modules for the CAMERA command line

Each module exposes add_arguments(parser), flags(args) and run(run_config,
show_progress). run() wraps the whole operation and returns a status
dictionary to the dispatcher instead of raising.
"""
import logging
from typing import Any, Dict

from ..exceptions import ConfigError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

logger = logging.getLogger(__name__)


def success(**fields) -> Dict[str, Any]:
    """Status of a finished command"""
    return {'success': True, 'exit_code': EXIT_OK, **fields}


def failure(command: str, error: Exception) -> Dict[str, Any]:
    """
    Status of a failed command

    Value errors (bad flags, malformed files, invalid configuration) exit
    with 1, everything else with 2.
    """
    exit_code = EXIT_VALIDATION if isinstance(error, ValueError) else EXIT_RUNTIME
    logger.error(f"{command} failed: {error}")
    logger.debug(f"{command} failure details", exc_info=error)
    return {'success': False, 'exit_code': exit_code, 'error': str(error)}


def require(options: Dict[str, Any], *names: str):
    """Raise a ConfigError naming the first missing required option"""
    for name in names:
        if options.get(name) in (None, ''):
            raise ConfigError(f"--{name.replace('_', '-')} is required")


def enabled(value) -> bool:
    """Truth value of a switch given as a flag or as a config-file string"""
    if isinstance(value, str):
        return value.strip().lower() in ('true', '1', 'yes')
    return bool(value)
