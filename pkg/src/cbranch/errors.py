"""Exception types shared across the package."""


class DomainError(ValueError):
    """Arguments outside an operation's mathematical domain."""


class NumericError(ArithmeticError):
    """A numerical routine failed to reach its tolerance.

    ``residual`` carries the routine's own error estimate and ``last_time``
    the last valid time reached by an integrator, when those apply.
    """

    def __init__(self, message: str, residual: float | None = None, last_time: float | None = None):
        super().__init__(message)
        self.residual = residual
        self.last_time = last_time


class UnsupportedOperation(NotImplementedError):
    """The operation exists but is not available for this variant."""
