"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`TrapBoseError`
so callers (and the CLI's exit-code mapping) can catch them in one place.
"""


class TrapBoseError(Exception):
    """Base class for all package errors."""


class ValidationError(TrapBoseError, ValueError):
    """Invalid input parameters."""


class DomainError(TrapBoseError, ValueError):
    """Argument outside the domain where a function is defined or accurate."""


class DivergenceError(DomainError):
    """The ideal gas diverges (chemical potential at or above the lowest level)."""


class SaturationError(TrapBoseError):
    """Chemical potential reached the lowest single-particle level.

    The gas would Bose-condense; the mean-field model used here excludes that.
    """

    def __init__(self, message, mu=None, lowest_level=None, z=None):
        super().__init__(message)
        self.mu = mu
        self.lowest_level = lowest_level
        self.z = z


class ConvergenceError(TrapBoseError):
    """An iterative procedure did not converge.

    ``last_iterate`` holds whatever the procedure had when it gave up.
    """

    def __init__(self, message, last_iterate=None, report=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.report = report


class QualityWarning(UserWarning):
    """A result was produced but misses its quality target."""


class DataError(TrapBoseError, ValueError):
    """Malformed or unphysical input data (images, profiles, files)."""


class InsufficientDataError(DataError):
    """Too few data points for the requested fit."""


class CalibrationError(DataError):
    """Cross-section calibration produced an unphysical factor."""


class BoundaryError(TrapBoseError):
    """A bounded minimizer ended on the boundary of its search interval.

    ``side`` is "upper" or "lower" when known.
    """

    def __init__(self, message, side=None):
        super().__init__(message)
        self.side = side


class RangeError(TrapBoseError):
    """A scan did not bracket the quantity being searched for."""


class BracketError(RangeError):
    """Root finding failed: no sign change in the bracket."""


class TruncationError(TrapBoseError):
    """Numerical cutoff too small for the requested accuracy."""
