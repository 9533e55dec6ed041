"""Exception types shared across the package."""


class RdegError(Exception):
    """Base class for every error this package raises on purpose."""


class DimensionError(RdegError):
    """Operands have incompatible dimensions."""


class FeasibilityError(RdegError):
    """A point lies outside the constraint set that was promised."""


class EmptyInputError(RdegError):
    """An aggregation input that must be nonempty is empty."""


class EpsilonOutOfRange(RdegError):
    """Trim level reached 1/2, where the clipping ranks would cross."""


class ConfidenceOutOfRange(RdegError):
    """Confidence level below what the estimator supports at this sample size."""


class NoInteriorSaddleError(RdegError):
    """The problem has no saddle point strictly inside the constraint balls."""


class ConfigError(RdegError):
    """Invalid run configuration. Knows the offending line when there is one."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalAbort(RdegError):
    """A non-finite value appeared mid-run. Carries the failing round."""

    def __init__(self, message: str, round_index: int | None = None):
        if round_index is not None:
            message = f"round {round_index}: {message}"
        super().__init__(message)
        self.round_index = round_index
        # partial RunTrace over the completed rounds, attached by protocol.run
        self.trace = None
