"""Dataset ingestion: counts CSV -> compositions, labels, feature filter.

File schema: UTF-8, header row, '.' decimal separator, one sample per row,
first column the sample id, every other column a feature except the label
column. ``transpose=True`` reads taxa-as-rows exports (one feature per row,
one sample per column; the label is then a row). Missing cells are errors.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.errors import (
    AllFeaturesFiltered,
    CsvParseError,
    DataError,
    InvalidComposition,
    MissingColumn,
    ZeroSumRow,
)
from ..core.schemas import Task
from .compdata import SIMPLEX_TOL
from .learn import encode_labels

logger = logging.getLogger(__name__)

DEFAULT_PREVALENCE = 0.25
DEFAULT_MIN_MEDIAN_NONZERO = 5.0

_PANDAS_LINE = re.compile(r"line (\d+)")


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: Optional[np.ndarray]
    feature_names: Tuple[str, ...]
    sample_ids: Tuple[str, ...]
    task: Task = Task.REGRESSION
    classes: Optional[Tuple[str, str]] = None
    label_column: Optional[str] = None
    raw_labels: Optional[Tuple[str, ...]] = None

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def p(self) -> int:
        return int(self.X.shape[1])

    def label_values(self) -> Optional[list]:
        """Labels as they appeared in the input."""
        if self.y is None:
            return None
        if self.task == Task.CLASSIFICATION and self.classes:
            return [self.classes[1] if v > 0 else self.classes[0] for v in self.y]
        return list(self.y)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.X, columns=list(self.feature_names))
        frame.insert(0, "sample_id", list(self.sample_ids))
        if self.y is not None:
            frame[self.label_column or "y"] = self.label_values()
        elif self.raw_labels is not None:
            frame[self.label_column or "label"] = list(self.raw_labels)
        return frame


@dataclass(frozen=True, eq=False)
class FilterResult:
    counts: pd.DataFrame
    report: pd.DataFrame

    @property
    def kept(self) -> list:
        return self.report.loc[self.report["kept"], "feature"].tolist()


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------

def _read_table(path: str, transpose: bool) -> Tuple[pd.DataFrame, dict]:
    """String table indexed by sample id, plus the source line of each entry."""
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, index_col=0, encoding="utf-8")
    except pd.errors.ParserError as err:
        match = _PANDAS_LINE.search(str(err))
        raise CsvParseError(int(match.group(1)) if match else 0, "", str(err)) from err
    except (pd.errors.EmptyDataError, UnicodeDecodeError) as err:
        raise CsvParseError(1, "", str(err)) from err
    raw.index = raw.index.astype(str)
    lines = {name: k + 2 for k, name in enumerate(raw.index)}
    if transpose:
        raw = raw.T
    return raw, lines


def _parse_float(cell: str) -> float:
    # correctly rounded, so "%.17g" output reads back bit for bit
    try:
        return float(cell)
    except ValueError:
        return float("nan")


def _numeric_column(values: pd.Series, column: str, line_of) -> np.ndarray:
    parsed = values.str.strip().map(_parse_float).astype(float)
    bad = parsed.isna() | ~np.isfinite(parsed.fillna(0.0))
    if bad.any():
        sample = values.index[int(np.flatnonzero(bad.to_numpy())[0])]
        cell = values[sample]
        reason = "missing value" if cell.strip() == "" else f"not a number: {cell!r}"
        raise CsvParseError(line_of(sample, column), column, reason)
    return parsed.to_numpy(dtype=float)


def read_counts_table(
    path: str,
    label_column: Optional[str] = None,
    transpose: bool = False,
) -> Tuple[pd.DataFrame, Optional[pd.Series]]:
    """Raw numeric counts (samples x features) and the untouched label strings."""
    raw, lines = _read_table(path, transpose)

    def line_of(sample: str, column: str) -> int:
        return lines[column] if transpose else lines[sample]

    labels = None
    if label_column is not None:
        if label_column not in raw.columns:
            raise MissingColumn(label_column)
        labels = raw[label_column].str.strip()
        raw = raw.drop(columns=[label_column])
    if raw.shape[1] == 0:
        raise DataError(f"{path} has no feature columns")
    if raw.index.duplicated().any():
        raise DataError(f"duplicate sample id {raw.index[raw.index.duplicated()][0]!r}")
    if raw.columns.duplicated().any():
        raise DataError(f"duplicate feature name {raw.columns[raw.columns.duplicated()][0]!r}")
    counts = pd.DataFrame(
        {str(col): _numeric_column(raw[col], str(col), line_of) for col in raw.columns},
        index=raw.index,
    )
    negative = counts.lt(0).to_numpy()
    if negative.any():
        r, c = (int(v[0]) for v in np.nonzero(negative))
        raise CsvParseError(line_of(counts.index[r], counts.columns[c]), counts.columns[c], "negative count")
    return counts, labels


def normalize_counts(counts: pd.DataFrame) -> np.ndarray:
    """Rows divided by their totals; rows already on the simplex are kept as read."""
    values = counts.to_numpy(dtype=float)
    totals = values.sum(axis=1)
    zero = np.flatnonzero(totals <= 0)
    if zero.size:
        raise ZeroSumRow(str(counts.index[int(zero[0])]))
    on_simplex = np.abs(totals - 1.0) <= SIMPLEX_TOL
    out = values.copy()
    out[~on_simplex] = values[~on_simplex] / totals[~on_simplex, None]
    return out


def parse_labels(labels: pd.Series, task: Task) -> Tuple[np.ndarray, Optional[Tuple[str, str]]]:
    if task == Task.CLASSIFICATION:
        return encode_labels(labels.tolist())
    parsed = labels.map(_parse_float).astype(float)
    if parsed.isna().any() or not np.all(np.isfinite(parsed)):
        first = labels.index[int(np.flatnonzero(parsed.isna().to_numpy() | ~np.isfinite(parsed.fillna(0.0)))[0])]
        raise DataError(f"sample {first!r}: regression label {labels[first]!r} is not a number")
    return parsed.to_numpy(dtype=float), None


def load_counts_csv(
    path: str,
    label_column: Optional[str] = None,
    task: Task = Task.REGRESSION,
    transpose: bool = False,
    prevalence_frac: Optional[float] = None,
    min_median_nonzero: Optional[float] = None,
    parse: bool = True,
) -> Dataset:
    """Counts or abundances CSV -> Dataset, optionally filtered before closure.

    With parse=False the label column is only kept as raw strings (grouping,
    subsets) and y stays empty.
    """
    counts, labels = read_counts_table(path, label_column, transpose)
    if prevalence_frac is not None or min_median_nonzero is not None:
        counts = prevalence_abundance_filter(
            counts,
            DEFAULT_PREVALENCE if prevalence_frac is None else prevalence_frac,
            DEFAULT_MIN_MEDIAN_NONZERO if min_median_nonzero is None else min_median_nonzero,
        ).counts
    X = normalize_counts(counts)
    if X.shape[1] < 2:
        raise InvalidComposition(f"compositions need at least 2 parts, {path} has {X.shape[1]}")
    y, classes = (None, None) if labels is None or not parse else parse_labels(labels, task)
    logger.info("loaded %s: n=%d samples, p=%d features", path, X.shape[0], X.shape[1])
    return Dataset(
        X=X,
        y=y,
        feature_names=tuple(counts.columns),
        sample_ids=tuple(counts.index),
        task=task,
        classes=classes,
        label_column=label_column,
        raw_labels=None if labels is None else tuple(labels.tolist()),
    )


def write_dataset_csv(dataset: Dataset, path: str) -> None:
    dataset.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def write_frame_csv(frame: pd.DataFrame, path: str) -> None:
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


# ---------------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------------

def prevalence_abundance_filter(
    counts,
    prevalence_frac: float = DEFAULT_PREVALENCE,
    min_median_nonzero: float = DEFAULT_MIN_MEDIAN_NONZERO,
    feature_names: Optional[Sequence[str]] = None,
) -> FilterResult:
    """Keep features present in >= prevalence_frac of the samples whose
    non-zero counts have median >= min_median_nonzero."""
    frame = counts if isinstance(counts, pd.DataFrame) else pd.DataFrame(
        np.asarray(counts, dtype=float),
        columns=list(feature_names) if feature_names is not None else None,
    )
    values = frame.to_numpy(dtype=float)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise InvalidComposition("counts must be finite and nonnegative")
    present = values > 0
    prevalence = present.mean(axis=0) if values.shape[0] else np.zeros(values.shape[1])
    medians = np.array([
        float(np.median(values[present[:, j], j])) if present[:, j].any() else 0.0
        for j in range(values.shape[1])
    ])
    kept = (prevalence >= prevalence_frac) & (medians >= min_median_nonzero)
    report = pd.DataFrame({
        "feature": [str(c) for c in frame.columns],
        "prevalence": prevalence,
        "median_nonzero": medians,
        "kept": kept,
    })
    if not kept.any():
        raise AllFeaturesFiltered(
            f"no feature is present in {prevalence_frac:.0%} of samples with median non-zero count >= {min_median_nonzero}"
        )
    logger.info("feature filter kept %d of %d features", int(kept.sum()), kept.size)
    return FilterResult(counts=frame.loc[:, kept], report=report)
