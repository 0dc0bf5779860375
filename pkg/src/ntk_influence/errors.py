"""Exception types shared across the package."""


class DataFormatError(ValueError):
    """A file could not be parsed. Carries the byte offset of the failure when known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class EmptyDatasetError(ValueError):
    """A dataset or filter produced zero rows."""


class ParameterError(ValueError):
    """An argument is outside its documented domain."""


class DomainError(ValueError):
    """Data violates a mathematical precondition (unit norms, +-1 labels, zero rows)."""


class ShapeError(ValueError):
    """Array shapes are inconsistent with each other."""


class DegenerateInputError(ValueError):
    """A statistic is undefined for this input (zero variance, too few points)."""


class DegenerateRemovalError(ValueError):
    """Leave-one-out is undefined because removal would empty the training set."""


class ConditioningError(RuntimeError):
    """A linear system is numerically singular or indefinite."""

    def __init__(self, message: str, lambda_min: float | None = None):
        if lambda_min is not None:
            message = f"{message} (lambda_min={lambda_min:.3e})"
        super().__init__(message)
        self.lambda_min = lambda_min


class DivergenceError(RuntimeError):
    """Gradient descent produced a non-finite or increasing loss."""

    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class StateError(RuntimeError):
    """An operation was called on an object in the wrong state."""
