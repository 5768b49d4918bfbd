"""Exception hierarchy shared by all modules."""


class HplError(Exception):
    """Base class for numerical and contract failures."""


class DomainError(HplError, ValueError):
    """Input outside the mathematical domain of an operation."""


class RangeError(HplError, OverflowError):
    """Result not representable as a finite double."""


class SingularityError(DomainError):
    """Spectral density evaluated exactly at one of its singular points."""


class DivergenceError(DomainError):
    """Integral or series diverges for the given parameters."""


class RankError(DomainError):
    """Sample covariance or correlation matrix is singular."""


class FactorizationError(HplError):
    """Dense Cholesky factorization failed."""


class ApproximationError(HplError):
    """Circulant embedding could not be made nonnegative."""


class InitializationError(HplError):
    """Periodogram search found too few admissible peaks."""


class NotCenteredError(DomainError):
    """Subordinating function has nonzero Gaussian mean."""


class DegenerateError(DomainError):
    """All Hermite coefficients vanish."""


class UnsupportedError(HplError):
    """Requested variant is not implemented."""


class ConfigError(HplError, ValueError):
    """Malformed experiment or CLI configuration."""
