class PeofoError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(PeofoError):
    pass


class NumericalError(PeofoError):
    """A solve failed (singular update, infeasible or non-converged QP)."""

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class DomainError(PeofoError, ValueError):
    """An input lies outside the region a model is defined on."""
