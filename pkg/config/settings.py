import os
from pathlib import Path
from dotenv import load_dotenv
import logging
from constants import (
    DEFAULT_LOG_LEVEL, DEFAULT_LOG_FORMAT, DEFAULT_LOG_FILE,
    DEFAULT_THREADS, THREADS_ENV
)
from utils.common import safe_get_env_int

# Load environment variables
env_path = Path(__file__).resolve().parent.parent / ".env"
load_dotenv(dotenv_path=env_path)

class Config:
    """Centralized process configuration"""

    # Block-level parallelism inside one renormalization step
    RENORM_THREADS = safe_get_env_int(THREADS_ENV, DEFAULT_THREADS)

    # Logging Configuration
    LOG_LEVEL = os.getenv("LOG_LEVEL", DEFAULT_LOG_LEVEL)
    LOG_FORMAT = DEFAULT_LOG_FORMAT
    LOG_FILE = os.getenv("LOG_FILE", DEFAULT_LOG_FILE)

    @classmethod
    def threads(cls) -> int:
        """Current thread cap; re-reads the environment so overrides take effect"""
        return safe_get_env_int(THREADS_ENV, cls.RENORM_THREADS)

    @classmethod
    def validate(cls):
        """Validate configuration on startup"""
        errors = []

        try:
            if cls.threads() < 1:
                errors.append(f"{THREADS_ENV} must be a positive integer")
        except ValueError as e:
            errors.append(str(e))

        if not isinstance(logging.getLevelName(cls.LOG_LEVEL.upper()), int):
            errors.append(f"LOG_LEVEL '{cls.LOG_LEVEL}' is not a logging level")

        if errors:
            raise ValueError("Configuration errors:\n" + "\n".join(errors))

        return True

logger = logging.getLogger(__name__)
