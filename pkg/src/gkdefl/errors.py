"""Exception types shared across the package."""


class GkdeflError(Exception):
    """Base class for all gkdefl errors."""


class DimensionMismatch(GkdeflError):
    """Operand shapes are inconsistent."""


class NotSymmetric(GkdeflError):
    """Matrix fails the symmetry check."""


class NotPositiveDefinite(GkdeflError):
    """A nonpositive pivot was encountered during factorization."""


class FactorizationFailed(GkdeflError):
    """Sparse factorization could not be completed."""


class InvalidSpec(GkdeflError):
    """Problem specification is out of range."""


class ParseError(GkdeflError):
    """A file could not be parsed."""


class ShapeError(GkdeflError):
    """Loaded system blocks have inconsistent shapes or deficient rank."""


class NotSPD(GkdeflError):
    """Loaded (1,1)-block is not symmetric positive definite."""


class IoError(GkdeflError):
    """File could not be written or read."""


class Breakdown(GkdeflError):
    """Bidiagonalization coefficient fell below the breakdown threshold."""


class SizeExceeded(GkdeflError):
    """Dense code path refused for a problem above its size threshold."""


class SingularTriplet(GkdeflError):
    """A (near-)zero singular value makes the requested operator singular."""


class InsufficientTrace(GkdeflError):
    """Solver trace too short for the requested extraction."""


class IllConditionedCoarse(GkdeflError):
    """Coarse deflation matrix is numerically singular."""


class NoConvergence(GkdeflError):
    """Iteration limit reached; carries the partial result when available.

    Most solver entry points report non-convergence through a flag on the
    returned report instead of raising; this exception is used where no
    partial result makes sense.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
