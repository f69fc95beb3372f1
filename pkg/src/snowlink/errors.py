"""Exception hierarchy shared by all snowlink modules."""


class SnowlinkError(Exception):
    """Base class for all errors raised by this package."""


class PatternSpaceTooLarge(SnowlinkError):
    """Full pattern enumeration requested for more sites than the guard allows."""


class ParseError(SnowlinkError):
    """A data or configuration file could not be parsed against its schema."""


class InvariantViolation(SnowlinkError):
    """A structural invariant of a data object does not hold."""


class DimensionMismatch(SnowlinkError):
    """Parameter vector length does not match the model's declared dimension."""


class ScopeViolation(SnowlinkError):
    """A within-site pattern carries a link bit for its own site."""


class DomainError(SnowlinkError):
    """An argument lies outside the admissible domain of an operation."""


class NonFiniteLikelihood(SnowlinkError):
    """A pattern probability needed by the likelihood underflowed to zero."""


class Unidentifiable(SnowlinkError):
    """The requested estimator is not identified by the observed counts."""


class NoConvergence(SnowlinkError):
    """An iterative solver exhausted its iteration budget."""


class OscillationDetected(NoConvergence):
    """The alternating size/parameter update failed to contract."""


class DegenerateDenominator(SnowlinkError):
    """The ratio-method denominator is numerically zero; the size estimate is unbounded."""


class SingularMatrix(SnowlinkError):
    """An asymptotic precision matrix is singular or too ill-conditioned to invert."""


class InsufficientData(SnowlinkError):
    """Too few effective observations for the requested covariance estimate."""
