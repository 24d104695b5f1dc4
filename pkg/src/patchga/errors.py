"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input, config key, or geometry constraint is invalid.

    The message always names the offending parameter or constraint.
    """


class DivergenceError(RuntimeError):
    """Raised when the FDTD update produces non-finite field values."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite field detected at step {step}")
