"""Exception types shared across the package."""


class MacCoopError(Exception):
    """Base class for all package errors."""


class InvalidArgument(MacCoopError, ValueError):
    """An argument violates a documented precondition."""


class InvalidCovariance(MacCoopError, ValueError):
    """A covariance matrix is not PSD or violates its power constraint."""


class ScenarioFormatError(InvalidArgument):
    """A scenario file failed to parse; message is line/field anchored."""


class NumericalFailure(MacCoopError, RuntimeError):
    """A numerical routine failed (singular matrix, LP breakdown, ...)."""


class NonConvergence(NumericalFailure):
    """An iterative solver hit its iteration cap.

    Carries the best iterate found so far and solver diagnostics so
    callers can inspect (or accept) the partial result.
    """

    def __init__(self, message, *, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or {}
