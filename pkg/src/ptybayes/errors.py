"""Exception hierarchy shared by the engine.

The CLI maps these onto distinct exit codes, so keep the classes coarse:
ValidationError for bad arguments and domain violations, GeometryError for
shape/plan mismatches, FormatError for anything wrong with an on-disk file,
DivergedError for non-finite iterates in the samplers/optimizers.
"""


class EngineError(Exception):
    """Base class for all errors raised by ptybayes."""


class ValidationError(EngineError, ValueError):
    """Invalid argument values (negative rates, degenerate inputs, ...)."""


class GeometryError(ValidationError):
    """Field/plan/probe dimensions do not fit together."""


class FormatError(EngineError):
    """A file does not conform to one of the binary formats."""


class DivergedError(EngineError):
    """An iterative procedure produced non-finite values."""


class ConfigError(EngineError):
    """A run configuration failed to parse or is incomplete."""
