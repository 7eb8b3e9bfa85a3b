"""
Global configuration loader for fsadapt.
Loads environment variables from .env file.
"""
from dotenv import load_dotenv
import logging
import os
from typing import Any, Iterable, List, Optional

from errors import ConfigError

load_dotenv()

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def get_env(key: str, required: bool = False, default: Optional[str] = None) -> Optional[str]:
    """Safely get environment variable with validation."""
    value = os.getenv(key, default)
    if required and value is None:
        raise ConfigError(f"Missing required environment variable: {key} (add it to your .env file)")
    return value


def get_log_level() -> int:
    """Resolve FSADAPT_LOG_LEVEL to a logging level."""
    name = (get_env("FSADAPT_LOG_LEVEL", default="INFO") or "INFO").upper()
    if name not in LOG_LEVELS:
        raise ConfigError(f"FSADAPT_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, got: {name}")
    return getattr(logging, name)


# ============================================================================
# Global Toolkit Configuration (from .env)
# ============================================================================

# Directory for daily log files; an empty value disables file logging
LOG_DIR = get_env("FSADAPT_LOG_DIR", default="logs")

# Directory scanned for components
COMPONENTS_DIR = get_env("FSADAPT_COMPONENTS_DIR", default="components")

# ============================================================================
# Configuration Validation Helpers
# ============================================================================


def validate_config_dict(config: Any, allowed_keys: Iterable[str], name: str = "config",
                         required_keys: Iterable[str] = ()) -> List[str]:
    """
    Validate a configuration dictionary against its allowed keys.

    Unknown keys are violations, never silently ignored.

    Args:
        config: Configuration mapping to validate
        allowed_keys: Keys the mapping may contain
        name: Dotted path of the mapping (for error messages)
        required_keys: Keys that must be present

    Returns:
        List of violation messages (empty when valid)
    """
    if not isinstance(config, dict):
        return [f"{name} must be a mapping, got {type(config).__name__}"]

    allowed = set(allowed_keys)
    violations = [f"{name}.{key}: unknown key" for key in config if key not in allowed]
    violations += [f"{name}.{key}: missing required key" for key in required_keys if key not in config]
    return violations


def validate_positive(value: Any, name: str, integer: bool = False, allow_zero: bool = False) -> List[str]:
    """
    Validate a positive (or non-negative) number.

    Args:
        value: Value to validate
        name: Dotted path of the setting (for error messages)
        integer: Require an integer (bools are rejected)
        allow_zero: Accept zero

    Returns:
        List of violation messages
    """
    kind = int if integer else (int, float)
    if isinstance(value, bool) or not isinstance(value, kind):
        return [f"{name}: must be {'an integer' if integer else 'a number'}, got {value!r}"]
    if value < 0 or (value == 0 and not allow_zero):
        return [f"{name}: must be {'>= 0' if allow_zero else '> 0'}, got {value!r}"]
    return []


def validate_probability(value: Any, name: str) -> List[str]:
    """Validate a probability in [0, 1]."""
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return [f"{name}: must be a number, got {value!r}"]
    if not 0.0 <= value <= 1.0:
        return [f"{name}: must lie in [0, 1], got {value!r}"]
    return []


def validate_choice(value: Any, choices: Iterable[str], name: str) -> List[str]:
    """Validate an enumerated string setting."""
    choices = tuple(choices)
    if value not in choices:
        return [f"{name}: must be one of {', '.join(choices)}, got {value!r}"]
    return []


def raise_if_invalid(violations: List[str]) -> None:
    """Raise a ConfigError listing every violation, if any."""
    if violations:
        raise ConfigError(violations)