"""Exception types shared across the package."""


class InvalidConfigError(ValueError):
    """A configuration value is out of its documented range."""


class InvalidSpecError(ValueError):
    """A scenario or dataset description is malformed."""


class InvalidDataError(ValueError):
    """Input data violates a documented precondition."""


class ShapeError(ValueError):
    """An array does not have the expected shape."""


class MissingModalityError(LookupError):
    """A probe window lacks samples for a required sensor kind."""


class InsufficientSamplesError(ValueError):
    """Too few samples for the requested operation."""


class DegenerateDataError(ValueError):
    """Data admits no meaningful result (e.g. a single-class training set)."""


class SequencingError(RuntimeError):
    """Records arrived out of order or an interval is inverted."""


class NotFoundError(LookupError):
    """A referenced identifier does not exist."""


class ValidationError(ValueError):
    """A submitted record fails schema validation."""


class ConflictError(ValueError):
    """Two provided intervals make contradictory claims."""


class UndefinedMetricError(ZeroDivisionError):
    """A metric's denominator is zero for the given inputs."""


class UndefinedFractionError(ZeroDivisionError):
    """A fraction over zero recorded slots was requested."""
