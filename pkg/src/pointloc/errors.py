"""Exception types shared across the engine."""


class PointlocError(Exception):
    """Base class for all engine errors."""


class BudgetExhausted(PointlocError):
    """A sign query would exceed the active query budget."""


class DegenerateHyperplane(PointlocError):
    """Operation requires a nonzero hyperplane normal."""


class RangeExceeded(PointlocError):
    """True margin ratio lies outside the bracketing range."""


class SizeLimitExceeded(PointlocError):
    """Instance too large for a brute-force enumeration oracle."""


class NumericalBreakdown(PointlocError):
    """Covariance spectrum collapsed below the resolvable floor."""


class UnlabeledSmallPoint(PointlocError):
    """A small-margin sample point was never labeled by a later round."""


class NoVote(PointlocError):
    """A point received no usable vote during boosting."""


class Infeasible(PointlocError):
    """No hypothesis is consistent with the collected labels."""


class InvalidSpec(PointlocError):
    """Instance specification failed validation."""


class IoFailure(PointlocError):
    """Report serialization failed."""


class GiveUp(PointlocError):
    """Zero-error restart cap exhausted; message carries diagnostics."""
