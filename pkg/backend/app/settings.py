import logging
import os

from dotenv import load_dotenv

from .errors import ConfigError

load_dotenv()

DEFAULT_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def get_thread_count() -> int:
    """Worker threads for one round's local training; 0 means sequential."""
    raw = os.getenv("FEDSIM_THREADS", "0").strip()
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigError(f"FEDSIM_THREADS must be an integer, got {raw!r}")
    if threads < 0:
        raise ConfigError(f"FEDSIM_THREADS must be >= 0, got {threads}")
    return threads


def get_log_level() -> int:
    name = os.getenv("FEDSIM_LOG_LEVEL", "INFO").strip().upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        raise ConfigError(f"FEDSIM_LOG_LEVEL is not a logging level: {name!r}")
    return level


def configure_logging() -> None:
    logging.basicConfig(level=get_log_level(), format=DEFAULT_LOG_FORMAT)
