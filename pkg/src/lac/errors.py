"""Exception hierarchy shared across the toolkit.

The CLI maps these to exit codes: ConfigError -> 1, DataError -> 2,
NumericError -> 3.
"""


class LacError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(LacError):
    """Invalid configuration or command usage."""


class DataError(LacError):
    """Malformed input data: bad schemas, unparseable files, invariant violations."""


class NumericError(LacError):
    """Numeric failure: non-finite values, divergence, impossible shapes."""
