"""Exception hierarchy shared across the toolkit.

Everything raised on purpose derives from :class:`GestigoError` so callers
(and the CLI exit-code mapping) can catch one base class.
"""


class GestigoError(Exception):
    """Base class for all gestigo errors."""


class NotFoundError(GestigoError):
    """A required file or directory does not exist."""


class ParseError(GestigoError):
    """Malformed on-disk data. Carries the offending file and line when known."""

    def __init__(self, message, path=None, line=None):
        self.path = str(path) if path is not None else None
        self.line = line
        loc = ""
        if self.path is not None:
            loc = f" [{self.path}" + (f":{line}]" if line is not None else "]")
        super().__init__(message + loc)


class SchemaError(GestigoError):
    """Data violates a dataset or joint-schema invariant."""


class ArgumentError(GestigoError, ValueError):
    """Invalid argument to a library operation."""


class ShapeError(GestigoError):
    """Tensor shape mismatch; the message names both shapes."""


class GraphError(GestigoError):
    """Invalid use of the autodiff graph (e.g. backward on a detached tensor)."""


class NumericError(GestigoError):
    """A forward or backward pass produced NaN or Inf."""


class ConfigError(GestigoError):
    """Inconsistent configuration (e.g. VO order mismatch with a checkpoint)."""


class TransportError(GestigoError):
    """Network failure while talking to the gesture service."""
