"""Exception types shared across the lab."""


class FoliationLabError(Exception):
    """Base class for all lab errors."""


class TrajectoryEscape(FoliationLabError):
    """A trajectory left the open bidisk before the requested time.

    Carries the first offending complex flow time (``time``) and the last
    valid chart point (``point``) when known.
    """

    def __init__(self, message, time=None, point=None):
        super().__init__(message)
        self.time = time
        self.point = point


class IntegrationFailure(FoliationLabError):
    """Adaptive integration collapsed (step underflow or solver failure)."""


class NewtonFailure(FoliationLabError):
    """A Newton solve failed to converge; carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CoverageError(FoliationLabError):
    """A constructed covering failed its own self-check."""


class CardinalityError(FoliationLabError):
    """A covering exceeded its cardinality budget."""
