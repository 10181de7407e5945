import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional

from dotenv import load_dotenv

from app.domain.errors import ConfigError

ENV_PREFIX = "RAMANNLI_"
_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


def _parse_bool(name: str, value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ConfigError(f"{name} must be a boolean, got {value!r}", field=name)


@dataclass(frozen=True)
class RuntimeSettings:
    """Process settings taken from the environment (never from the link config)."""

    out_dir: Path = Path("out")
    log_level: str = "INFO"
    log_file: Optional[str] = None
    log_json: bool = True

    @classmethod
    def from_env(cls, environ: Optional[Mapping[str, str]] = None) -> "RuntimeSettings":
        env = os.environ if environ is None else environ
        level = env.get(f"{ENV_PREFIX}LOG_LEVEL", "INFO").strip().upper()
        if level not in _LOG_LEVELS:
            raise ConfigError(f"{ENV_PREFIX}LOG_LEVEL must be one of {', '.join(_LOG_LEVELS)}",
                              field=f"{ENV_PREFIX}LOG_LEVEL")
        out_dir = env.get(f"{ENV_PREFIX}OUT_DIR", "out").strip()
        if not out_dir:
            raise ConfigError(f"{ENV_PREFIX}OUT_DIR must not be empty", field=f"{ENV_PREFIX}OUT_DIR")
        log_file = env.get(f"{ENV_PREFIX}LOG_FILE") or None
        json_flag = env.get(f"{ENV_PREFIX}LOG_JSON")
        return cls(
            out_dir=Path(out_dir),
            log_level=level,
            log_file=log_file,
            log_json=True if json_flag is None else _parse_bool(f"{ENV_PREFIX}LOG_JSON", json_flag),
        )


def load_environment(env_file: Optional[str] = None) -> bool:
    """Load a .env file into os.environ without overriding variables already set."""
    return load_dotenv(dotenv_path=env_file, override=False)


# Global instance
_settings: Optional[RuntimeSettings] = None


def get_settings() -> RuntimeSettings:
    """Get the process-wide settings, reading the environment on first use."""
    global _settings
    if _settings is None:
        _settings = RuntimeSettings.from_env()
    return _settings


def setup_settings(environ: Optional[Mapping[str, str]] = None) -> RuntimeSettings:
    """Re-read the settings from the environment (or a given mapping)."""
    global _settings
    _settings = RuntimeSettings.from_env(environ)
    return _settings
