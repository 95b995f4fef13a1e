"""
Logging setup for mtorl.

Library modules log through ``logging.getLogger(__name__)``; the CLI calls
:func:`configure_logging` once so records are rendered by rich on stderr.
"""

import logging
import os
from typing import Optional

from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler

LOG_LEVEL_ENV = "MTORL_LOG_LEVEL"

LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def resolve_level(name: Optional[str]) -> tuple[int, bool]:
    """
    Map a level name to a logging level.

    Returns:
        (level, recognised) where unrecognised names fall back to INFO.
    """
    if name is None or not name.strip():
        return logging.INFO, True
    key = name.strip().lower()
    if key == "warning":
        key = "warn"
    if key in LEVELS:
        return LEVELS[key], True
    return logging.INFO, False


def configure_logging(level: Optional[str] = None) -> int:
    """
    Install a RichHandler on the ``mtorl`` logger.

    Args:
        level: Explicit level name; defaults to ``MTORL_LOG_LEVEL`` (after
            loading ``.env``) and then to ``info``.

    Returns:
        The numeric level that was applied.
    """
    load_dotenv()
    raw = level if level is not None else os.getenv(LOG_LEVEL_ENV)
    numeric, recognised = resolve_level(raw)

    logger = logging.getLogger("mtorl")
    for handler in list(logger.handlers):
        if isinstance(handler, RichHandler):
            logger.removeHandler(handler)

    handler = RichHandler(
        console=Console(stderr=True),
        show_path=numeric <= logging.DEBUG,
        rich_tracebacks=True,
        markup=False,
    )
    handler.setFormatter(logging.Formatter("%(message)s", datefmt="[%X]"))
    logger.addHandler(handler)
    logger.setLevel(numeric)
    logger.propagate = False

    if not recognised:
        logger.warning(
            "%s=%r is not one of %s; using info",
            LOG_LEVEL_ENV, raw, ", ".join(LEVELS),
        )
    return numeric


def debug_enabled() -> bool:
    return logging.getLogger("mtorl").isEnabledFor(logging.DEBUG)
