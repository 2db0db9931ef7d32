"""Usage:

from app.env import Mode, mode, get_settings

if mode == Mode.PROD:
    print("Running in deployed service")

settings = get_settings()
"""

import os
from enum import Enum
from functools import lru_cache
from pathlib import Path

import dotenv
from pydantic import BaseModel, Field, ValidationError

dotenv.load_dotenv()


class Mode(str, Enum):
    DEV = "development"
    PROD = "production"


mode = Mode.PROD if os.environ.get("WINMAPF_SERVICE_TYPE") == "prod" else Mode.DEV


class Settings(BaseModel):
    """Defaults for the CLI and the HTTP service; CLI flags override them."""

    timeout_s: float = Field(60.0, gt=0, description="Planning budget per episode, seconds")
    workers: int = Field(1, ge=1, description="Benchmark worker processes")
    trace_dir: Path | None = Field(None, description="Where episode logs and penalty dumps go")
    log_level: str = Field("INFO", pattern=r"^(DEBUG|INFO|WARNING|ERROR|CRITICAL)$")
    oracle_max_agents: int = Field(4, ge=1, le=6)


_ENV_KEYS = {
    "timeout_s": "WINMAPF_TIMEOUT_S",
    "workers": "WINMAPF_WORKERS",
    "trace_dir": "WINMAPF_TRACE_DIR",
    "log_level": "WINMAPF_LOG_LEVEL",
    "oracle_max_agents": "WINMAPF_ORACLE_MAX_AGENTS",
}


def load_settings(environ: dict[str, str] | None = None) -> Settings:
    """Settings from WINMAPF_* variables; raises pydantic ValidationError on bad values."""
    environ = os.environ if environ is None else environ
    values = {field: environ[key] for field, key in _ENV_KEYS.items() if environ.get(key)}
    if "log_level" in values:
        values["log_level"] = values["log_level"].upper()
    return Settings(**values)


@lru_cache
def get_settings() -> Settings:
    return load_settings()


__all__ = [
    "Mode",
    "mode",
    "Settings",
    "ValidationError",
    "get_settings",
    "load_settings",
]
