"""
Exception hierarchy shared by every Relformer module.
The CLI maps these onto exit codes (see main.py).
"""


class RelformerError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(RelformerError, ValueError):
    """Input outside an operation's domain (zero quaternion, non-orthonormal matrix, ...)."""


class DegenerateInputError(RelformerError, ValueError):
    """Input that cannot be orthogonalized (parallel 6D columns, rank-deficient 9D matrix)."""


class ShapeError(RelformerError, ValueError):
    """Shape mismatch inside a tensor operation or model component."""


class ConfigError(RelformerError, ValueError):
    """Invalid or unknown configuration value."""


class FormatError(RelformerError, ValueError):
    """Malformed file on disk (bad magic, truncated payload, wrong header)."""


class EmptyViewError(RelformerError, RuntimeError):
    """A rendered view shows too few landmarks to be useful."""


class NumericError(RelformerError, RuntimeError):
    """Non-finite values during training or inference."""


class CompatibilityError(RelformerError, RuntimeError):
    """Checkpoint and dataset were produced under incompatible settings."""
