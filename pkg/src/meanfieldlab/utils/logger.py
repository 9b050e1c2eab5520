import logging  # Importing the standard Python logging module
import os  # Importing the standard Python os module for operating system interactions

from rich.logging import RichHandler

from meanfieldlab.utils.config import Config

config = Config()

# One logger for the whole package; submodules log through it so that a run's
# debug.log holds the engine, solver and diagnostics messages in one place.
logger = logging.getLogger("meanfieldlab")

# Terminal output goes through rich for readable run progress.
shell_handler = RichHandler(show_path=False)

# If the log folder does not exist, create it.
if not os.path.exists(config.foldername_log):
    os.makedirs(config.foldername_log, exist_ok=True)

# Create a handler for logging to a file.
file_handler = logging.FileHandler(config.filename_debug_log)

# Set the log levels for the logger and the two handlers.
logger.setLevel(config.logger_level)
shell_handler.setLevel(config.logger_shell_level)
file_handler.setLevel(config.logger_file_level)

# Create formatters with the format strings from the config.
shell_formatter = logging.Formatter(config.logger_shell_fmt)
file_formatter = logging.Formatter(config.logger_file_fmt)

# Attach the formatters to the handlers.
shell_handler.setFormatter(shell_formatter)
file_handler.setFormatter(file_formatter)

# Attach the handlers to the logger, once, even if this module is reloaded.
if not logger.handlers:
    logger.addHandler(shell_handler)
    logger.addHandler(file_handler)
logger.propagate = False


def set_verbosity(level: int) -> None:
    """Change the terminal log level (the file handler keeps DEBUG)."""
    shell_handler.setLevel(level)
