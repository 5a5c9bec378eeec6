"""
Configuration - Environment settings and structured JSON config files.
Uses environment variables (via .env) for process-wide settings.
"""

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Type, TypeVar

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

T = TypeVar("T")

CONFIG_SECTIONS = ("sim", "gains", "expert", "generation", "policy", "eval")


class ConfigError(ValueError):
    """Raised when a configuration file or override is invalid."""


@dataclass
class EnvSettings:
    """Process-wide settings read from the environment."""

    log_level: str = "INFO"
    debug: bool = False
    jobs: int = 1

    @classmethod
    def from_env(cls) -> "EnvSettings":
        """
        Build settings from FORCEGRASP_* environment variables.

        Returns:
            EnvSettings instance
        """
        level = os.getenv("FORCEGRASP_LOG", "INFO").strip().upper() or "INFO"
        debug = os.getenv("FORCEGRASP_DEBUG", "0").strip().lower() in ("1", "true", "yes", "on")
        try:
            jobs = max(1, int(os.getenv("FORCEGRASP_JOBS", "1")))
        except ValueError:
            raise ConfigError("FORCEGRASP_JOBS must be an integer")
        return cls(log_level=level, debug=debug, jobs=jobs)


def load_config_file(path: Optional[Path]) -> Dict[str, Dict[str, Any]]:
    """
    Read a structured JSON configuration file.

    Args:
        path: Path to the JSON file, or None for an empty configuration

    Returns:
        Mapping of section name to its key/value overrides
    """
    if path is None:
        return {section: {} for section in CONFIG_SECTIONS}

    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")

    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}")

    if not isinstance(raw, dict):
        raise ConfigError(f"Config file {path} must contain a JSON object")

    unknown = sorted(set(raw) - set(CONFIG_SECTIONS))
    if unknown:
        raise ConfigError(f"Unknown config section(s): {', '.join(unknown)}")

    sections = {}
    for section in CONFIG_SECTIONS:
        values = raw.get(section, {})
        if not isinstance(values, dict):
            raise ConfigError(f"Config section '{section}' must be an object")
        sections[section] = values
    return sections


def build_dataclass(cls: Type[T], values: Dict[str, Any], section: str) -> T:
    """
    Instantiate a config dataclass from a section, rejecting unknown keys.

    Args:
        cls: Dataclass type to build
        values: Key/value overrides for the dataclass defaults
        section: Section name used in error messages

    Returns:
        Dataclass instance
    """
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"Unknown key(s) in section '{section}': {', '.join(unknown)}")

    converted = {}
    for f in dataclasses.fields(cls):
        if f.name in values:
            value = values[f.name]
            # JSON has no tuples
            if isinstance(value, list):
                value = tuple(value)
            converted[f.name] = value
    try:
        return cls(**converted)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid values in section '{section}': {e}")


def dataclass_to_dict(instance: Any) -> Dict[str, Any]:
    """Convert a config dataclass to a JSON-ready dict (tuples become lists)."""
    result = {}
    for key, value in dataclasses.asdict(instance).items():
        result[key] = list(value) if isinstance(value, tuple) else value
    return result


# Singleton instance for reuse across modules
_settings_instance: Optional[EnvSettings] = None


def get_settings() -> EnvSettings:
    """Get or create singleton environment settings."""
    global _settings_instance
    if _settings_instance is None:
        _settings_instance = EnvSettings.from_env()
    return _settings_instance


def reset_settings():
    """Drop cached settings so the environment is read again."""
    global _settings_instance
    _settings_instance = None
