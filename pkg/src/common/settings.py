"""
Application settings loaded from environment variables.
It centralizes cross-cutting concerns like settings, logging, and error types used by the experiments.
Keeping these helpers isolated reduces duplication and keeps numerical modules focused on the math.
"""

from __future__ import annotations

import os
from functools import lru_cache
from typing import Final

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

SETTINGS_ENV_VARS: Final[tuple[str, ...]] = (
    "PROJECT_NAME",
    "ENV",
    "LOG_LEVEL",
    "ALTFLOW_THREADS",
    "ALTFLOW_REPORTS_DIR",
)


class Settings(BaseModel):
    """Typed runtime configuration."""

    model_config = ConfigDict(extra="ignore")

    PROJECT_NAME: str = "altub-flow-anomaly-detection"
    ENV: str = "local"
    LOG_LEVEL: str = "INFO"
    ALTFLOW_THREADS: int = Field(default=1, ge=1)
    ALTFLOW_REPORTS_DIR: str = "reports"


def load_settings(*, load_env: bool = True) -> Settings:
    """Load and validate settings from `.env` and the process environment."""

    if load_env:
        load_dotenv()

    provided = {key: os.environ[key] for key in SETTINGS_ENV_VARS if os.getenv(key)}
    try:
        return Settings.model_validate(provided)
    except ValidationError as exc:
        raise RuntimeError(f"Invalid environment configuration: {exc}") from exc


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Cached accessor for application settings."""

    return load_settings()
