"""Exception types shared across the package."""


class ScsdError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ScsdError):
    """Operand shapes are incompatible with the requested operation."""


class ContractError(ScsdError):
    """An API precondition was violated (wrong state, wrong argument kind)."""


class ParameterError(ScsdError, ValueError):
    """A configuration or parameter value is out of its valid range."""


class NumericError(ScsdError):
    """A computation produced or would produce non-finite values."""


class StateError(ScsdError):
    """An object was used before reaching the required state."""


class DataLoadError(ScsdError):
    """A dataset directory or checkpoint file failed validation."""


class MetricError(ScsdError):
    """No eligible samples/labels for the requested metric."""
