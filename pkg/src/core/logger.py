import logging
import sys
from typing import Optional
from src.core.config import Config

def setup_logging(
    level: Optional[str] = None,
    log_to_file: bool = True,
    log_to_console: bool = True
) -> logging.Logger:
    """
    Setup application logging

    Args:
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL); defaults to LT_LOG
        log_to_file: Whether to log to LT_LOG_FILE (ignored when unset)
        log_to_console: Whether to log to stderr

    Returns:
        Logger instance
    """

    # Create logger
    logger = logging.getLogger(Config.APP_NAME)
    logger.setLevel(getattr(logging, (level or Config.LOG).upper()))
    logger.propagate = False

    # Clear existing handlers
    logger.handlers.clear()

    formatter = logging.Formatter(Config.LOG_FORMAT)

    # stdout carries command results, so the console handler goes to stderr
    if log_to_console:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(formatter)
        logger.addHandler(console_handler)

    if log_to_file and Config.LOG_FILE:
        file_handler = logging.FileHandler(Config.LOG_FILE, encoding='utf-8')
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger

# Create default logger
logger = setup_logging()
