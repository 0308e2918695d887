"""Exception taxonomy.

Services raise these; only the CLI turns them into exit codes:
usage/config problems exit 2, bad data 3, numerical failures 4.
"""

from __future__ import annotations

from typing import Optional


class CompositionalKernelError(Exception):
    exit_code: int = 1


class UsageError(CompositionalKernelError):
    exit_code = 2


class DataError(CompositionalKernelError, ValueError):
    exit_code = 3


class NumericalError(CompositionalKernelError, ArithmeticError):
    exit_code = 4


# ---------------------------------------------------------------------------
# Simplex / perturbations
# ---------------------------------------------------------------------------

class InvalidComposition(DataError):
    pass


class DegenerateCoordinate(DataError):
    """Perturbation of coordinate j is undefined because x[j] = 1."""

    def __init__(self, coordinate: int, sample: Optional[int] = None) -> None:
        self.coordinate = coordinate
        self.sample = sample
        where = f" (sample {sample})" if sample is not None else ""
        super().__init__(f"coordinate {coordinate} carries the full mass{where}; perturbation undefined")


class InvalidScale(DataError):
    pass


class OutOfRange(DataError):
    pass


class NonpositiveShift(DataError):
    pass


class NonpositiveEntry(DataError):
    pass


class DimensionMismatch(DataError):
    pass


# ---------------------------------------------------------------------------
# Kernels / weights / trees
# ---------------------------------------------------------------------------

class InvalidParameters(UsageError):
    pass


class InvalidWeight(DataError):
    pass


class InvalidPartition(DataError):
    pass


class NotPSD(NumericalError):
    def __init__(self, min_eigenvalue: float, message: str = "") -> None:
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(message or f"matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:.3e})")


class NewickParseError(DataError):
    def __init__(self, offset: int, expected: str, found: str = "") -> None:
        self.offset = offset
        self.expected = expected
        shown = repr(found) if found else "end of input"
        super().__init__(f"Newick parse error at byte {offset}: expected {expected}, found {shown}")


class DuplicateLeafName(DataError):
    pass


class UnknownLeaf(DataError):
    pass


# ---------------------------------------------------------------------------
# Learning / interpretation / embedding
# ---------------------------------------------------------------------------

class SolveFailure(NumericalError):
    pass


class AllPointsIdentical(NumericalError):
    pass


class FoldTooSmall(DataError):
    pass


class SingleClassFold(DataError):
    pass


class PredictorFailure(NumericalError):
    def __init__(self, sample: int, coordinate: Optional[int], cause: BaseException) -> None:
        self.sample = sample
        self.coordinate = coordinate
        self.__cause__ = cause
        where = f", coordinate {coordinate}" if coordinate is not None else ""
        super().__init__(f"predictor failed on sample {sample}{where}: {cause}")


class NonzeroSum(DataError):
    pass


class NonpositiveCoordinate(DataError):
    pass


class EmptySubset(DataError):
    pass


# ---------------------------------------------------------------------------
# Data files
# ---------------------------------------------------------------------------

class CsvParseError(DataError):
    def __init__(self, line: int, column: str, message: str) -> None:
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column '{column}': {message}")


class ZeroSumRow(DataError):
    def __init__(self, sample_id: str) -> None:
        self.sample_id = sample_id
        super().__init__(f"sample '{sample_id}' has zero total abundance")


class NonBinaryLabels(DataError):
    pass


class AllFeaturesFiltered(DataError):
    pass


class MissingColumn(UsageError, KeyError):
    def __init__(self, column: str) -> None:
        self.column = column
        super().__init__(f"column '{column}' not found in input")

    def __str__(self) -> str:
        return self.args[0]
