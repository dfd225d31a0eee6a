"""
Centralized logging configuration for travagen.

Usage:
    from config import setup_logging
    setup_logging("logs/anonymize.log")

Or for module-level logging tagged with a component name:
    from config import get_logger
    logger = get_logger("ddpm")

For long CPU-bound training runs (flushes after every message):
    setup_logging("logs/sweep.log", crash_resilient=True)
"""

import os
import sys

from loguru import logger

# Default format with component, module, function, and line number for tracing
DEFAULT_FORMAT = (
    "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {extra[component]: <8} | "
    "{module}:{function}:{line} | {message}"
)

# Compact format for console output
CONSOLE_FORMAT = "{time:HH:mm:ss} | {level: <8} | {extra[component]: <8} | {message}"

BANNER_WIDTH = 60


class FlushingFileSink:
    """
    A file sink that flushes and fsyncs after every write.

    Training runs can take minutes of pure CPU time; this keeps the log on disk
    if the process is killed part way through.
    """

    def __init__(self, filepath: str):
        self.filepath = filepath
        os.makedirs(os.path.dirname(filepath) or ".", exist_ok=True)
        self._file = open(filepath, "a", encoding="utf-8")  # noqa: SIM115

    def write(self, message: str):
        self._file.write(message)
        self._file.flush()
        os.fsync(self._file.fileno())

    def close(self):
        self._file.close()


def setup_logging(
    log_file: str | None = None,
    level: str = "DEBUG",
    rotation: str = "10 MB",
    retention: str = "7 days",
    console: bool = True,
    console_level: str | None = None,
    crash_resilient: bool = False,
):
    """
    Configure logging for a CLI run, script, or test session.

    Args:
        log_file: Path to log file. If None, only console logging is enabled.
        level: Minimum log level for file output (DEBUG, INFO, WARNING, ERROR).
        rotation: When to rotate log files (e.g., "10 MB", "1 day").
            Ignored if crash_resilient=True.
        retention: How long to keep old log files (e.g., "7 days").
            Ignored if crash_resilient=True.
        console: Whether to output to console (stderr).
        console_level: Console log level. Defaults to same as file level.
        crash_resilient: If True, flush and sync to disk after every log message.

    Example:
        setup_logging("logs/anonymize.log", level="INFO")
        setup_logging(console_level="WARNING")  # Console warnings only, no file
    """
    logger.remove()
    logger.configure(extra={"component": "-"})

    if console:
        logger.add(sys.stderr, level=console_level or level, format=CONSOLE_FORMAT, colorize=True)

    if log_file:
        if crash_resilient:
            sink = FlushingFileSink(log_file)
            logger.add(sink, level=level, format=DEFAULT_FORMAT)
            logger.debug(f"Logging configured: file={log_file}, level={level}, crash_resilient=True")
        else:
            logger.add(
                log_file,
                level=level,
                format=DEFAULT_FORMAT,
                rotation=rotation,
                retention=retention,
                compression="zip",
            )
            logger.debug(f"Logging configured: file={log_file}, level={level}")


def get_logger(component: str | None = None):
    """
    Get the loguru logger, optionally bound to a component name.

    The component shows up in the third column of every formatted line, so
    decoder, discriminator and noise-predictor training can be told apart in a
    single log file.

    Args:
        component: Short tag such as "travag", "ddpm" or "cli".

    Returns:
        The (possibly bound) loguru logger.
    """
    if component is None:
        return logger
    return logger.bind(component=component)


def log_banner(title: str, component: str | None = None):
    """Write a ==== framed section title, as the run scripts do between phases."""
    log = get_logger(component)
    log.info("=" * BANNER_WIDTH)
    log.info(title)
    log.info("=" * BANNER_WIDTH)


# Module import must not break formatting for code that logs before setup_logging runs.
logger.configure(extra={"component": "-"})
