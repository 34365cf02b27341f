"""Exception types raised across the package."""


class LblNavError(Exception):
    """Base class for all package errors."""


class RangeTooSmall(LblNavError):
    """A range fell below the admissible minimum ``r_min``.

    The augmented dynamics divide by the ranges, so the vehicle must never
    sit on top of a transponder.
    """

    def __init__(self, ranges, r_min):
        self.ranges = ranges
        self.r_min = r_min
        super().__init__(f"range below minimum {r_min:g} m: {ranges}")


class DegenerateGeometry(LblNavError):
    """Landmark geometry does not determine a unique position."""


class DivergenceDetected(LblNavError):
    """Filter state left the finite/bounded region."""


class SingularInnovation(LblNavError):
    """Innovation covariance could not be factorized."""


class IntegrationFailure(LblNavError):
    """Adaptive integration did not reach the requested tolerance."""


class ParseError(LblNavError):
    """Configuration file is not valid JSON."""


class ValidationError(LblNavError):
    """Configuration parsed but violates an invariant."""
