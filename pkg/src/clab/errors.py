"""Exception types shared across the package."""


class ClabError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(ClabError, ValueError):
    pass


class InvalidMetricError(ClabError, ValueError):
    pass


class InvalidCurveError(ClabError, ValueError):
    pass


class TubeTooWideError(ClabError):
    pass


class ConvergenceFailure(ClabError):
    """Optimizer did not converge. The best iterate is kept on `best`."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class EmptyConeError(ClabError):
    pass


class TruncationError(ClabError):
    pass


class EpsilonTooLargeError(ClabError):
    pass


class AssemblyError(ClabError):
    pass


class NumericalFailure(ClabError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ResolutionError(ClabError):
    pass


class DegenerateEndpointError(ClabError):
    pass


class InvalidProfileError(ClabError):
    pass


class PreconditionViolation(ClabError):
    pass
