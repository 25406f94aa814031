"""Exception and warning types raised by manproj."""


class ManifoldError(Exception):
    """Base class for all estimator errors."""


class RankDeficient(ManifoldError):
    pass


class DimensionMismatch(ManifoldError, ValueError):
    pass


class EmptyROI(ManifoldError):
    pass


class InsufficientSamples(ManifoldError):
    pass


class SigmaExceedsReach(ManifoldError, ValueError):
    pass


class AmbiguousProjection(ManifoldError):
    pass


class DegenerateTransport(ManifoldError):
    pass


class DegenerateSpectrumWarning(UserWarning):
    """Leading eigenvalues of a local covariance are (numerically) tied."""
