"""Exception types shared across the toolkit.

The CLI maps these onto distinct exit codes, so raising the right class
matters for anything user-facing.
"""


class ConfigError(ValueError):
    """Bad or inconsistent configuration values."""


class DataError(RuntimeError):
    """Missing, empty, or undecodable input data."""


class InvariantError(ValueError):
    """A documented model/architecture invariant was violated."""
