"""Exception types shared across the package.

The CLI maps ``ValueError``/``LookupError`` subclasses to exit code 2 and
``ArithmeticError`` subclasses to exit code 3.
"""


class DomainError(ValueError):
    """Input lies outside the physical or mathematical domain of an operation."""


class DegenerateInputError(ValueError):
    """Input carries no spread (constant samples, zero-variance features)."""


class EdgeMismatchError(ValueError):
    """Two histograms do not share bin edges."""


class UnknownGasError(LookupError):
    def __init__(self, name, known):
        self.name = name
        self.known = list(known)
        super().__init__(f"unknown gas {name!r}; known gases: {', '.join(self.known)}")


class SamplingError(ValueError):
    """Rejection sampler exhausted its retry budget."""


class TrainingDivergedError(ArithmeticError):
    """Training loss became non-finite."""
