"""Logging setup: rich console handler plus an optional plain debug file."""

from __future__ import annotations

import logging
import warnings
from pathlib import Path

from rich.console import Console
from rich.logging import RichHandler

_ROOT = "pofrailty"
_FILE_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


def get_logger(name: str) -> logging.Logger:
    """Module logger under the package namespace."""
    if name.startswith(_ROOT):
        return logging.getLogger(name)
    return logging.getLogger(f"{_ROOT}.{name}")


def configure_logging(level: str = "WARNING", log_path: str = "") -> logging.Logger:
    """Install handlers on the package logger. Safe to call repeatedly."""
    logger = logging.getLogger(_ROOT)
    logger.setLevel(logging.DEBUG)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    console = RichHandler(
        console=Console(stderr=True),
        level=getattr(logging, level.upper(), logging.WARNING),
        show_path=False,
        rich_tracebacks=False,
    )
    logger.addHandler(console)

    if log_path:
        try:
            path = Path(log_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(path, encoding="utf-8")
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(logging.Formatter(_FILE_FORMAT))
            logger.addHandler(file_handler)
        except OSError as exc:
            # The debug file must never interfere with a run.
            warnings.warn(f"debug log disabled: {exc}", RuntimeWarning, stacklevel=2)

    logging.captureWarnings(True)
    logger.propagate = False
    return logger
