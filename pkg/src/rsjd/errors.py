"""Exception types shared across the package."""


class RsjdError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(RsjdError, ValueError):
    """Invalid model, generator, or path data."""


class DomainError(RsjdError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class SimulationDivergedError(RsjdError, ArithmeticError):
    """State blew up (non-finite or beyond the divergence guard)."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class UnsupportedModelError(RsjdError, TypeError):
    """The model family is outside what this routine implements."""


class SingularControlError(RsjdError, ZeroDivisionError):
    """The closed-form control denominator is numerically zero."""


class NumericalError(RsjdError, ArithmeticError):
    """A numerical routine failed (rank deficiency, non-convergence, ...)."""


class ConfigError(RsjdError, ValueError):
    """Bad experiment configuration."""
