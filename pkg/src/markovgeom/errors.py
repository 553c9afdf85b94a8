"""Exception hierarchy shared by every module."""


class MarkovGeomError(Exception):
    """Base class for all library errors."""


class InputError(MarkovGeomError, ValueError):
    """Malformed or out-of-domain input."""


class StructuralError(MarkovGeomError):
    """Support-graph condition violated (reducible, zero column, rank loss)."""


class SolverError(MarkovGeomError):
    """An iterative solver did not converge.

    ``residual`` holds the last residual (or gradient norm) reached and
    ``best`` the best iterate, when one exists.
    """

    def __init__(self, message, residual=None, best=None):
        super().__init__(message)
        self.residual = residual
        self.best = best


class RangeError(SolverError):
    """Target expectation parameter lies outside the achievable set."""


class NumericalError(MarkovGeomError):
    """A numerical self-check failed (non-PD Hessian, method disagreement)."""


class SizeError(MarkovGeomError):
    """Exhaustive enumeration requested beyond the configured cap."""
