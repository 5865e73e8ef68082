"""Exception hierarchy shared by every module of the package."""


class InversionError(Exception):
    """Base class for all errors raised by this package."""


class NonPositiveDefinite(InversionError):
    """A covariance matrix could not be factorized, even after jitter."""


class DimensionMismatch(InversionError, ValueError):
    pass


class InvalidDimension(InversionError, ValueError):
    pass


class DomainError(InversionError, ValueError):
    """A forward map was evaluated outside its domain."""


class ForwardModelFailure(InversionError):
    """The forward map produced a non-finite value at a sigma point."""

    def __init__(self, point_index, message=None):
        self.point_index = point_index
        super().__init__(message or f"forward model failed at sigma point {point_index}")


class JacobianUnavailable(InversionError):
    pass


class DivergenceDetected(InversionError):
    """The iterated mean left the bounded region; carries the partial history."""

    def __init__(self, iteration, records, message=None):
        self.iteration = iteration
        self.records = list(records)
        super().__init__(message or f"divergence detected at iteration {iteration}")


class SolverFailure(InversionError):
    pass


class DomainExhausted(InversionError):
    pass


class TruncationSuspect(InversionError):
    pass


class ConfigError(InversionError, ValueError):
    pass


class MismatchedProblems(InversionError, ValueError):
    pass
