"""
Package-wide logging setup.

Modules create their own logger with ``logging.getLogger(__name__)``; all of
them propagate to the ``heatobs`` logger configured here.
"""
import logging
import os

from dotenv import load_dotenv

LOGGER_NAME = "heatobs"
DEFAULT_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

logger = logging.getLogger(LOGGER_NAME)


def configure_logging(level: str | int | None = None) -> logging.Logger:
    '''
    Attach a stderr handler to the package logger and set its level.

    The level falls back to ``HEATOBS_LOG_LEVEL`` (read from the environment or
    a ``.env`` file) and then to ``WARNING``.
    '''
    load_dotenv()
    if level is None:
        level = os.getenv("HEATOBS_LOG_LEVEL", "WARNING")
    if isinstance(level, str):
        level = level.upper()

    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(DEFAULT_FORMAT))
        logger.addHandler(handler)

    logger.setLevel(level)
    return logger
