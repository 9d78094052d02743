"""Error types that the CLI maps to distinct exit codes."""


class ConfigError(ValueError):
    """Invalid configuration value or combination."""


class DataError(ValueError):
    """Unreadable, malformed, or inconsistent input data."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite or otherwise unusable result."""
