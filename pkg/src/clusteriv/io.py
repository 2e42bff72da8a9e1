"""CSV ingestion."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, MissingValue, NonBinaryColumn, ParseError
from .estimators import Dataset
from .regress import ClusterIndex

log = logging.getLogger(__name__)

MISSING_TOKENS = {"", "na", "nan", "null", "none"}


@dataclass
class InputSpec:
    path: str | Path
    outcome_col: str
    treatment_col: str
    instrument_col: str
    cluster_col: str
    covariate_cols: list[str] = field(default_factory=list)
    missing_policy: str = "error"

    def __post_init__(self):
        if self.missing_policy not in ("error", "drop_row"):
            raise ValueError("missing_policy must be 'error' or 'drop_row'")
        cols = self.columns
        if len(set(cols)) != len(cols):
            raise DataError(f"column roles must name distinct columns, got {cols}")

    @property
    def columns(self) -> list[str]:
        return [self.outcome_col, self.treatment_col, self.instrument_col, self.cluster_col,
                *self.covariate_cols]


@dataclass
class LoadReport:
    n_rows_read: int
    n_rows_dropped: int
    n_units: int
    n_clusters: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _number(text: str, line: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(line, col, f"not a number: {text!r}") from None
    if not np.isfinite(v):
        raise ParseError(line, col, f"non-finite value {text!r}")
    return v


def _binary(text: str, line: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise NonBinaryColumn(col, text, row=line) from None
    if v not in (0.0, 1.0):
        raise NonBinaryColumn(col, text, row=line)
    return v


def read_csv(spec: InputSpec) -> tuple[Dataset, LoadReport]:
    """Parse a header-first CSV into a :class:`Dataset`.

    Cluster ids follow the order in which labels first appear. Row numbers in
    error messages are physical line numbers (the header is line 1).
    """
    with open(spec.path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, None, "file is empty") from None
        except csv.Error as exc:
            raise ParseError(reader.line_num, None, str(exc)) from None
        header = [h.strip() for h in header]
        pos = {}
        for col in spec.columns:
            if col not in header:
                raise ParseError(1, col, "column not found in header")
            pos[col] = header.index(col)

        y, d, z, g, x = [], [], [], [], []
        n_read = n_dropped = 0
        try:
            for row in reader:
                line = reader.line_num
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                n_read += 1
                if len(row) != len(header):
                    raise ParseError(line, None, f"expected {len(header)} fields, found {len(row)}")
                vals = {c: row[pos[c]].strip() for c in spec.columns}
                gaps = [c for c in spec.columns if vals[c].lower() in MISSING_TOKENS]
                if gaps:
                    if spec.missing_policy == "error":
                        raise MissingValue(gaps[0], line)
                    n_dropped += 1
                    continue
                y.append(_number(vals[spec.outcome_col], line, spec.outcome_col))
                d.append(_binary(vals[spec.treatment_col], line, spec.treatment_col))
                z.append(_binary(vals[spec.instrument_col], line, spec.instrument_col))
                g.append(vals[spec.cluster_col])
                x.append([_number(vals[c], line, c) for c in spec.covariate_cols])
        except csv.Error as exc:
            raise ParseError(reader.line_num, None, str(exc)) from None

    if len(y) < 2:
        raise DataError("need at least two complete rows")
    xm = np.asarray(x, dtype=np.float64).reshape(len(y), len(spec.covariate_cols))
    data = Dataset(
        np.asarray(y), np.asarray(d), np.asarray(z),
        ClusterIndex.from_labels(np.asarray(g, dtype=object).astype(str)),
        xm if spec.covariate_cols else None,
        list(spec.covariate_cols),
    )
    report = LoadReport(n_read, n_dropped, data.n_units, data.n_clusters)
    log.info("loaded %d units in %d clusters (%d rows dropped)", data.n_units, data.n_clusters, n_dropped)
    return data, report


def load_csv(spec: InputSpec) -> Dataset:
    return read_csv(spec)[0]
