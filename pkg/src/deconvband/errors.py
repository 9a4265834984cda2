"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A quadrature or linear-algebra step failed its accuracy gate."""

    def __init__(self, message: str, **values):
        super().__init__(message)
        self.values = values


class DomainError(ValueError):
    """Inputs fall outside the range where the asymptotic formulas apply."""
