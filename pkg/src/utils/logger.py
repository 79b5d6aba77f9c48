import logging
import os
from typing import Optional

# =========================
# LOGGING SETUP
# =========================

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"

_LEVELS = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
}


def level_from_verbosity(verbosity: int) -> int:
    if verbosity >= 2:
        return logging.DEBUG
    if verbosity == 1:
        return logging.INFO
    env_level = os.getenv("VLT_LOG_LEVEL", "WARNING").upper()
    return _LEVELS.get(env_level, logging.WARNING)


def setup_logging(level: int = logging.WARNING, log_file: Optional[str] = None):
    """
    Configure the root "src" logger once. Library modules only create
    loggers; handlers are attached here by the command line driver.
    """
    root = logging.getLogger("src")
    root.setLevel(level)
    root.handlers.clear()

    stream = logging.StreamHandler()
    stream.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(stream)

    if log_file is not None:
        file_handler = logging.FileHandler(log_file, mode="w")
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(file_handler)

    return root
