"""Exception types shared across the package."""


class BcrnnError(Exception):
    """Base class for all package-specific errors."""


class InvalidLengthError(BcrnnError, ValueError):
    """Transform length is zero or not a power of two."""


class DimensionMismatchError(BcrnnError, ValueError):
    """Operands have incompatible shapes or lengths."""


class MalformedSpectrumError(BcrnnError, ValueError):
    """Half spectrum violates the real-input symmetry invariants."""


class PartitionError(BcrnnError, ValueError):
    """Block size does not evenly partition a matrix dimension."""


class NumericError(BcrnnError, ArithmeticError):
    """Non-finite values encountered where finite ones are required."""


class DivergenceError(BcrnnError, ArithmeticError):
    """Training objective became non-finite."""

    def __init__(self, message, last_objective=None):
        super().__init__(message)
        self.last_objective = last_objective


class InfeasibleCapacityError(BcrnnError, ValueError):
    """No block size up to the search limit fits the storage budget."""


class ModelFileError(BcrnnError, ValueError):
    """Model file is corrupt, truncated, or has a bad checksum."""
