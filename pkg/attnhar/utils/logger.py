"""Console logging for the command-line tool.

Library modules only call ``logging.getLogger(__name__)``. The CLI configures the package
logger once through :func:`get_logger`, so records of every ``attnhar.*`` module reach a
single RichHandler on stderr and stdout stays free for results.
"""

import logging
import os
from typing import Final

from rich.console import Console
from rich.logging import RichHandler

console = Console(stderr=True)

PACKAGE_LOGGER: Final[str] = "attnhar"

# Only environment variable the program reads.
LOG_LEVEL_ENV: Final[str] = "ATTNHAR_LOG_LEVEL"

_ENV_LEVELS: Final = {"DEBUG", "INFO", "WARNING", "ERROR"}


def resolve_level(verbose: bool = False) -> int:
    """DEBUG with ``--verbose``, INFO otherwise; ``ATTNHAR_LOG_LEVEL`` overrides both."""
    env_level = os.environ.get(LOG_LEVEL_ENV, "").strip().upper()
    if env_level in _ENV_LEVELS:
        return int(getattr(logging, env_level))
    return logging.DEBUG if verbose else logging.INFO


def get_logger(name: str = PACKAGE_LOGGER, verbose: bool = False) -> logging.Logger:
    """Logger ``name`` with a rich stderr handler at the resolved level.

    Calling it again only updates the level; the handler is attached once.
    """
    logger = logging.getLogger(name)
    logger.setLevel(resolve_level(verbose))

    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(
            console=console,
            rich_tracebacks=True,
            markup=True,
            show_time=True,
            show_path=verbose,
        )
        handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(handler)

    return logger
