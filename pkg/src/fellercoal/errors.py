"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the requested quantity."""


class NumericalError(ArithmeticError):
    """A numerical procedure did not reach its tolerance.

    The best available estimate and its error bound are kept on the
    exception so callers can decide whether to use them anyway.
    """

    def __init__(self, message, value=None, error=None):
        super().__init__(message)
        self.value = value
        self.error = error


class PopulationOverflowError(RuntimeError):
    """A simulated population exceeded its configured cap."""
