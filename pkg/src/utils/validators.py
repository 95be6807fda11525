import re
from typing import Any

from core.errors import ConfigError

ARM_NAME_PATTERN = re.compile(r'^[A-Za-z0-9][A-Za-z0-9_-]{0,63}$')


class ConfigValidator:
    """Range checks for run configuration values. Each raises ConfigError naming the key path."""

    @staticmethod
    def positive(path: str, value: Any):
        if value <= 0:
            raise ConfigError(path, f"must be positive, got {value}")

    @staticmethod
    def non_negative(path: str, value: Any):
        if value < 0:
            raise ConfigError(path, f"must not be negative, got {value}")

    @staticmethod
    def fraction(path: str, value: float):
        if not 0 < value <= 1:
            raise ConfigError(path, f"must lie in (0, 1], got {value}")

    @staticmethod
    def open_unit(path: str, value: float):
        if not 0 < value < 1:
            raise ConfigError(path, f"must lie in (0, 1), got {value}")

    @staticmethod
    def at_least(path: str, value: int, minimum: int):
        if value < minimum:
            raise ConfigError(path, f"must be at least {minimum}, got {value}")

    @staticmethod
    def choice(path: str, value: str, options):
        if value not in options:
            raise ConfigError(path, f"'{value}' is not one of {sorted(options)}")

    @staticmethod
    def non_empty(path: str, value):
        if len(value) == 0:
            raise ConfigError(path, "must not be empty")

    @staticmethod
    def arm_name(path: str, value: str):
        if not ARM_NAME_PATTERN.match(value):
            raise ConfigError(path, f"'{value}' must be 1-64 letters, digits, '_' or '-'")
