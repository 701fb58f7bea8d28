"""Error taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
anything else -> 4.
"""


class PromptCCError(Exception):
    """Base class for package errors."""


class ConfigError(PromptCCError):
    """Invalid or inconsistent configuration."""


class DataError(PromptCCError):
    """Malformed or unusable input data."""
