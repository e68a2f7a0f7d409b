"""Exception types shared across the package."""


class GGSMError(Exception):
    """Base class for errors raised by this package."""


class NotSPDError(GGSMError, ValueError):
    """A matrix that must be symmetric positive definite is not."""


class DimensionError(GGSMError, ValueError):
    """Array shapes do not agree."""


class InfiniteFisherInformation(GGSMError, ArithmeticError):
    """The translation Fisher information of the source is not finite."""


class DegenerateInputError(GGSMError, ValueError):
    """Input carries no usable signal (constant image, singular covariance)."""


class OracleRefusal(GGSMError, ValueError):
    """A Monte Carlo oracle declines a configuration it cannot estimate reliably."""
