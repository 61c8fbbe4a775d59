"""Exception hierarchy."""


class QneError(Exception):
    """Base class for all errors raised by this package."""


class InvalidDimensionError(QneError, ValueError):
    pass


class NotHermitianError(QneError, ValueError):
    pass


class SingularOperandError(QneError, ValueError):
    pass


class InvalidStateError(QneError, ValueError):
    """A matrix failed the density-operator invariants."""


class NumericalFailureError(QneError, ArithmeticError):
    pass


class DegenerateBatchError(QneError, ArithmeticError):
    """The log of a non-positive sample mean was requested."""


class TrainingDivergedError(QneError, ArithmeticError):
    """Training produced a non-finite objective; the partial trace is kept."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
