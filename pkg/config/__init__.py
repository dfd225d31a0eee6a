import os

from dotenv import load_dotenv

from config.logging import get_logger, log_banner, setup_logging

load_dotenv()

LOG_DIR = os.getenv("TRAVAGEN_LOG_DIR", "logs")
LOG_LEVEL = os.getenv("TRAVAGEN_LOG_LEVEL", "INFO")
DEFAULT_SEED = os.getenv("TRAVAGEN_SEED", "")

CASE_COLUMN = os.getenv("TRAVAGEN_CASE_COLUMN", "case_id")
ACTIVITY_COLUMN = os.getenv("TRAVAGEN_ACTIVITY_COLUMN", "activity")
TIMESTAMP_COLUMN = os.getenv("TRAVAGEN_TIMESTAMP_COLUMN", "timestamp")

__all__ = [
    "setup_logging",
    "get_logger",
    "log_banner",
    "LOG_DIR",
    "LOG_LEVEL",
    "DEFAULT_SEED",
    "CASE_COLUMN",
    "ACTIVITY_COLUMN",
    "TIMESTAMP_COLUMN",
]
