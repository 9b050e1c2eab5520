import logging  # Importing the standard Python logging module
import os
from dataclasses import dataclass, field

# Importing the dataclass decorator from Python's built-in dataclasses module
from pathlib import Path


def _env_path(name: str, default: Path) -> Path:
    value = os.environ.get(name)
    return Path(value).resolve() if value else default


def _env_workers(name: str) -> int:
    value = os.environ.get(name, "").strip()
    if not value:
        return os.cpu_count() or 1
    try:
        workers = int(value)
    except ValueError:
        return os.cpu_count() or 1
    return max(workers, 1)


# Define a dataclass for the laboratory's ambient configuration.
# Everything a run needs that is not part of the scenario itself lives here:
# where logs go, how verbose they are, and how many workers to use by default.
@dataclass
class Config:
    # Root folder for logs; the working directory unless redirected
    foldername_root: Path = field(
        default_factory=lambda: _env_path("MEANFIELDLAB_LOG_DIR", Path.cwd())
    )
    # Default directory for run outputs (reports, CSV series, checkpoints)
    foldername_runs: Path = Path("runs")

    # Worker count used when neither the CLI nor a config file sets one
    default_workers: int = field(
        default_factory=lambda: _env_workers("MEANFIELDLAB_WORKERS")
    )

    # Define the log levels for the logger and the two handlers
    # These levels represent the lowest severity of messages that will be handled.
    logger_level: int = logging.DEBUG
    logger_shell_level: int = logging.INFO
    logger_file_level: int = logging.DEBUG

    # Define the log formats for shell and file handlers
    logger_shell_fmt: str = "%(message)s"
    logger_file_fmt: str = "%(levelname)s %(asctime)s [%(filename)s:%(funcName)s:%(lineno)d] \t%(message)s"

    @property
    def foldername_log(self) -> Path:
        # Logs live next to the root unless MEANFIELDLAB_LOG_DIR points elsewhere
        if "MEANFIELDLAB_LOG_DIR" in os.environ:
            return self.foldername_root
        return self.foldername_root / "logs"

    @property
    def filename_debug_log(self) -> Path:
        return self.foldername_log / "debug.log"
