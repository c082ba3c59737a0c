"""
Logging configuration for the LQG identification toolkit.
Loguru sinks: stderr for progress, an optional rotating file for full detail.
"""

import sys
from pathlib import Path

from loguru import logger

CONSOLE_FORMAT = "<green>{time:HH:mm:ss.SSS}</green> | <level>{level: <7}</level> | <cyan>{module}</cyan> - <level>{message}</level>"
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <7} | {module}:{function}:{line} | {message}"


def setup_logger(log_level="INFO", log_file=None):
    """
    Route toolkit logs to stderr, keeping stdout for command summaries.

    Args:
        log_level: Console level (DEBUG, INFO, WARNING, ERROR)
        log_file: Optional file receiving DEBUG and above, rotated at 10 MB

    Returns:
        The configured loguru logger
    """
    logger.remove()
    logger.add(sys.stderr, level=log_level.upper(), format=CONSOLE_FORMAT, colorize=True)

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        logger.add(log_path, level="DEBUG", format=FILE_FORMAT, rotation="10 MB", retention=5,
                   encoding="utf-8", backtrace=False, diagnose=False)
        logger.debug(f"File logging to {log_path}")

    return logger


def get_logger():
    """Shared loguru logger."""
    return logger
