"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """A precondition on an argument does not hold."""


class InvalidRegime(ValueError):
    """Operation requested for the wrong network regime (dense/extended)."""


class NearFieldViolation(ValueError):
    """Two nodes are closer than the far-field model allows."""


class NumericError(ArithmeticError):
    """Non-finite input or an iterative routine that failed to converge."""
