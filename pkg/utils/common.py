"""Common utility functions and decorators"""

import os
import sys
import time
import logging
import functools
import warnings
from typing import Any, Callable, Dict, List, Optional
from constants import (
    LOGS_DIR, DEFAULT_LOG_FORMAT, DEFAULT_LOG_LEVEL, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFICATION
)


def setup_project_path():
    """Setup project path for imports - replaces manual sys.path.append"""
    project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    if project_root not in sys.path:
        sys.path.insert(0, project_root)


def _log_file_path(log_file: str) -> str:
    """Bare file names go under LOGS_DIR; anything with a directory is used as given"""
    if os.path.dirname(log_file):
        return log_file
    return os.path.join(LOGS_DIR, log_file)


def setup_logging(name: str, level: Optional[str] = None, log_file: Optional[str] = None) -> logging.Logger:
    """Setup standardized logging configuration

    Records go to stderr so that nothing mixes with files written under --out.

    Args:
        name: Logger name
        level: Logging level (defaults to LOG_LEVEL from the environment)
        log_file: Log file name or path (defaults to LOG_FILE from the environment)

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)
    if logger.handlers:
        return logger

    level_name = (level or os.getenv("LOG_LEVEL") or DEFAULT_LOG_LEVEL).upper()
    numeric_level = logging.getLevelName(level_name)
    logger.setLevel(numeric_level if isinstance(numeric_level, int) else logging.INFO)
    logger.propagate = False

    formatter = logging.Formatter(DEFAULT_LOG_FORMAT)
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    log_file = os.getenv("LOG_FILE", "") if log_file is None else log_file
    if log_file:
        path = _log_file_path(log_file)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        file_handler = logging.FileHandler(path, encoding="utf-8")
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


def log_execution_time(func: Callable) -> Callable:
    """Log the wall time of a tower or subcommand run

    Failures are logged at DEBUG only; handle_exceptions reports them once.
    """
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        logger = logging.getLogger(func.__module__)
        start = time.perf_counter()
        try:
            result = func(*args, **kwargs)
        except Exception as e:
            logger.debug(f"{func.__qualname__} raised {type(e).__name__} after {time.perf_counter() - start:.3f}s")
            raise
        logger.info(f"{func.__qualname__} finished in {time.perf_counter() - start:.3f}s")
        return result

    return wrapper


def exit_code_for(error: BaseException) -> int:
    """Map an exception onto the CLI exit-code contract"""
    # Imported lazily: pydantic is only needed by the CLI layer
    from pydantic import ValidationError as SchemaError
    from utils.errors import RenormError, ValidationError, VerificationError

    if isinstance(error, VerificationError):
        return EXIT_VERIFICATION
    if isinstance(error, (ValidationError, SchemaError, OSError, ValueError)):
        return EXIT_CONFIG
    if isinstance(error, RenormError):
        return EXIT_NUMERICAL
    return EXIT_NUMERICAL


def handle_exceptions(log_error: bool = True) -> Callable:
    """Decorator turning exceptions raised by a command into exit codes

    Args:
        log_error: Whether to log the error
    """
    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except Exception as e:
                code = exit_code_for(e)
                if log_error:
                    logger = logging.getLogger(func.__module__)
                    logger.error(f"Error in {func.__name__} (exit {code}): {str(e)}")
                return code
        return wrapper
    return decorator


def warning_names(caught: List[warnings.WarningMessage]) -> List[str]:
    """Render recorded warnings as "Category: message" strings, deduplicated in order"""
    seen = []
    for item in caught:
        text = f"{item.category.__name__}: {item.message}"
        if text not in seen:
            seen.append(text)
    return seen


def create_report_dict(command: str, passed: bool, data: Optional[Dict] = None) -> Dict[str, Any]:
    """Create standardized report dictionary

    Args:
        command: Subcommand that produced the report
        passed: Overall status
        data: Optional additional data

    Returns:
        Standardized report dictionary
    """
    report = {
        "command": command,
        "passed": passed,
    }

    if data:
        report.update(data)

    return report


def safe_get_env_int(key: str, default: int) -> int:
    """Safely get an integer environment variable

    Args:
        key: Environment variable key
        default: Default value if not found or empty

    Returns:
        Environment variable value

    Raises:
        ValueError: If the variable is set but not an integer
    """
    value = os.getenv(key, "").strip()

    if not value:
        return default

    try:
        return int(value)
    except ValueError:
        raise ValueError(f"Environment variable '{key}' must be an integer, got '{value}'")
