"""Exception hierarchy.

Errors split into three families that map onto CLI exit codes:
``DataError`` (exit 3), ``NumericalError`` (exit 4) and plain usage problems
(exit 2, raised by argparse itself).
"""

from __future__ import annotations


class ClusterIVError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class DimensionMismatch(ClusterIVError, ValueError):
    exit_code = 3


class DataError(ClusterIVError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, line: int, column: str | None, reason: str):
        self.line = line
        self.column = column
        self.reason = reason
        where = f"line {line}" + (f", column {column!r}" if column else "")
        super().__init__(f"{where}: {reason}")


class NonBinaryColumn(DataError):
    def __init__(self, column: str, value: object, row: int | None = None):
        self.column = column
        self.value = value
        self.row = row
        at = f" at row {row}" if row is not None else ""
        super().__init__(f"column {column!r} must be 0/1, got {value!r}{at}")


class MissingValue(DataError):
    def __init__(self, column: str, row: int):
        self.column = column
        self.row = row
        super().__init__(f"missing value in column {column!r} at row {row}")


class NumericalError(ClusterIVError):
    exit_code = 4


class RankDeficient(NumericalError):
    pass


class ClusterConstantCovariate(RankDeficient):
    """Covariates that vanish after the within-cluster transformation."""

    def __init__(self, columns: list[str]):
        self.columns = list(columns)
        super().__init__(
            "covariates constant within every cluster are absorbed by the fixed "
            f"effects and must be dropped: {', '.join(self.columns)}"
        )


class WeakIdentification(NumericalError):
    pass


class DegenerateInstrument(WeakIdentification):
    pass


class DegenerateWithinVariation(WeakIdentification):
    pass


class NonPositiveSeDiff(NumericalError):
    pass


class TooFewValidReplicates(NumericalError):
    pass


class AllZeroWeights(NumericalError):
    pass
