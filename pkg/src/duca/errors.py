"""Exception types shared across the engine."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DegenerateInputError(ValueError):
    """Input is structurally too small for the operation (e.g. single-feature rows)."""


class ConfigError(ValueError):
    """Invalid configuration. Message lists every offending field."""


class CacheStateError(RuntimeError):
    """A cache read was attempted before any fresh step populated the cache."""


class CapabilityError(RuntimeError):
    """The execution mode cannot provide a required input (e.g. attention scores
    are never materialized in efficient-attention mode)."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values from finite inputs."""
