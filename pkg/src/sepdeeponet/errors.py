"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes disagree with an operation's contract."""


class NumericError(ArithmeticError):
    """A non-finite value or a singular operation was encountered."""


class SolverDivergenceError(NumericError):
    """A reference solver produced a non-finite state."""


class UnsupportedOperationError(TypeError):
    """An operation outside the differentiable primitive set was applied."""


class CorruptionError(ValueError):
    """Stored data failed an integrity check."""


class FormatError(ValueError):
    """Stored data does not follow the expected layout or version."""


class UsageError(ValueError):
    """Invalid user-supplied configuration."""
