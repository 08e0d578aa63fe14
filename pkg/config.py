"""
Runtime Settings
Environment-driven defaults for experiments, logging and output
"""

import logging
import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

from errors import InvalidConfigurationError

load_dotenv()

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


@dataclass(frozen=True)
class Settings:
    """Resolved environment defaults (see .env.example)"""
    seed: int
    samples: int
    replicates: int
    workers: int
    output_dir: str
    log_level: str
    show_progress: bool
    palm_rejection_budget: int
    exact_pmf_limit: int


def _env_int(name: str, default: int, minimum: int = 0) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise InvalidConfigurationError(f"{name}={raw!r} is not an integer")
    if value < minimum:
        raise InvalidConfigurationError(f"{name}={value} must be >= {minimum}")
    return value


def _env_bool(name: str, default: bool) -> bool:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise InvalidConfigurationError(f"{name}={raw!r} is not a boolean")


def load_settings() -> Settings:
    """
    Read the PPA_* environment variables

    Returns:
        Settings with defaults filled in for anything unset
    """
    level = os.getenv("PPA_LOG_LEVEL", "INFO").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        raise InvalidConfigurationError(f"PPA_LOG_LEVEL={level!r} is not a logging level")

    return Settings(
        seed=_env_int("PPA_SEED", 20240917),
        samples=_env_int("PPA_SAMPLES", 200, minimum=1),
        replicates=_env_int("PPA_REPLICATES", 5, minimum=1),
        workers=_env_int("PPA_WORKERS", 1, minimum=1),
        output_dir=os.getenv("PPA_OUTPUT_DIR", "results"),
        log_level=level,
        show_progress=_env_bool("PPA_PROGRESS", True),
        palm_rejection_budget=_env_int("PPA_PALM_REJECTION_BUDGET", 1_000_000, minimum=1),
        exact_pmf_limit=_env_int("PPA_EXACT_PMF_LIMIT", 20, minimum=1),
    )


def configure_logging(level: Optional[str] = None) -> None:
    """Install the root handler; front ends call this once"""
    chosen = (level or load_settings().log_level).upper()
    logging.basicConfig(level=getattr(logging, chosen, logging.INFO), format=LOG_FORMAT)
