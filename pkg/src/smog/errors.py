"""Exception hierarchy.

Every error raised on purpose by the library derives from :class:`SmogError`
so the CLI can map it onto an exit code.
"""


class SmogError(Exception):
    """Base class for library errors."""


class ParameterError(SmogError, ValueError):
    """An argument violates a documented precondition."""


class DimensionError(ParameterError):
    """Array shapes are inconsistent, or a matrix is not square/symmetric."""


class DegeneracyError(SmogError, ArithmeticError):
    """A rank condition failed (e.g. the k-th singular value of M2 vanished).

    ``sigma_k`` carries the offending singular value when known.
    """

    def __init__(self, message, sigma_k=None):
        super().__init__(message)
        self.sigma_k = sigma_k


class IllConditionedTrialError(DegeneracyError):
    """theta is (nearly) orthogonal to a recovered eigenvector."""


class EtaCollisionError(DegeneracyError):
    """Projections eta^T mu_i collide or vanish; re-draw eta."""


class KurtosisDegeneracyError(DegeneracyError):
    """The cumulant Hessian stays singular: some source has ~zero excess kurtosis."""


class RankError(DegeneracyError):
    """Input matrix does not have full column rank."""
