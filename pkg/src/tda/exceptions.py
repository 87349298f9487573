"""Exception types raised across the package."""


class InputShapeError(ValueError):
    """An array does not have the dimensions an operation expects."""


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class NumericalError(FloatingPointError):
    """A computation produced non-finite values."""

    def __init__(self, message, sample_id=None):
        super().__init__(message)
        self.sample_id = sample_id


class SingularSystemError(ArithmeticError):
    """A linear system could not be factorized."""


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of iterations."""

    def __init__(self, message, residual_norm=None):
        super().__init__(message)
        self.residual_norm = residual_norm


class DegenerateDesignError(ValueError):
    """A fluctuation or regression has no usable variation."""


class SchemaError(ValueError):
    """Tabular input is missing columns or holds invalid values."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss)."""

    def __init__(self, message, epoch=None, history=None):
        super().__init__(message)
        self.epoch = epoch
        self.history = history
