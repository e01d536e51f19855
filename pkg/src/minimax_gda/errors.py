"""Exception hierarchy shared across the package.

Kept flat and explicit so callers (and the CLI exit-code policy) can
distinguish bad arguments from numerical breakdowns from failed
verification.
"""


class MinimaxGdaError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(MinimaxGdaError, ValueError):
    """An argument violates a documented precondition."""


class SingularMatrixError(InvalidInputError):
    """A matrix required to be invertible is numerically singular."""


class NotPositiveDefiniteError(InvalidInputError):
    """A matrix required to be SPD failed its Cholesky factorization."""


class NumericalFailureError(MinimaxGdaError, RuntimeError):
    """An iterative kernel failed to converge.

    ``partial`` carries whatever partial results were available at the
    point of failure (may be ``None``).
    """

    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


class InvalidStateError(MinimaxGdaError, RuntimeError):
    """A computed quantity is inconsistent with what the operation assumes
    (e.g. an indefinite primal Hessian where a convex one is required)."""


class InsufficientDataError(MinimaxGdaError, ValueError):
    """Not enough usable data points for an estimate."""


class GenerationFailureError(MinimaxGdaError, RuntimeError):
    """Random instance generation exhausted its retry budget."""


class CertificateFailureError(MinimaxGdaError, RuntimeError):
    """A certification sweep found a cell contradicting the claimed behavior.

    ``cell`` names the offending configuration.
    """

    def __init__(self, msg, cell=None):
        super().__init__(msg)
        self.cell = cell


class VerificationFailureError(MinimaxGdaError, RuntimeError):
    """An acceptance/verification suite failed a hard assertion."""
