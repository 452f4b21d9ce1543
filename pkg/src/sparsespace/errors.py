"""Exception types raised across the package."""


class SparseSpaceError(Exception):
    """Base class for every error raised by sparsespace."""


# matrix ingestion / oracle
class OutOfBounds(SparseSpaceError, IndexError):
    pass


class DuplicateEntry(SparseSpaceError, ValueError):
    pass


class MatrixMarketError(SparseSpaceError, ValueError):
    """Problem reading a Matrix Market file.  ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MalformedHeader(MatrixMarketError):
    pass


class UnsupportedKind(MatrixMarketError):
    pass


class IndexOutOfDeclaredBounds(MatrixMarketError):
    pass


class DimensionMismatch(SparseSpaceError, ValueError):
    pass


# transformation chain
class InvalidSpec(SparseSpaceError, ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ZeroMachines(SparseSpaceError, ValueError):
    pass


# decoders
class StructureExhausted(SparseSpaceError):
    pass


class InconsistentBlockCount(SparseSpaceError):
    pass


class SchemaError(SparseSpaceError, ValueError):
    pass


class IntegrityError(SparseSpaceError):
    pass


# reduction circuits
class TargetMismatch(SparseSpaceError):
    pass


class LevelBudgetExceeded(SparseSpaceError):
    pass


class CapacityExceeded(SparseSpaceError):
    pass


class MonotonicityViolation(SparseSpaceError):
    pass


class PropertyViolated(SparseSpaceError):
    pass


# simulator / designs
class Deadlock(SparseSpaceError):
    pass


class UnknownDesign(SparseSpaceError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class BadParameters(SparseSpaceError, ValueError):
    pass
