"""Delimited-file ingestion and export."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .data import DataError, Dataset

__all__ = ["ColumnMapping", "MISSING_TOKENS", "ingest", "write_dataset_csv"]

log = logging.getLogger(__name__)

MISSING_TOKENS = frozenset({"", "NA", "N/A", "NaN", "nan", "null", "NULL", "."})
LARGE_SCALE = 5.0


@dataclass(frozen=True)
class ColumnMapping:
    """Which columns play which role.

    ``categorical`` columns are covariates expanded to 0/1 indicators (first
    level in sorted order dropped); they need not be repeated in
    ``covariates``.
    """

    outcome: str
    treatment: str
    covariates: tuple = ()
    categorical: tuple = ()

    @property
    def covariate_columns(self):
        return tuple(dict.fromkeys(tuple(self.covariates) + tuple(self.categorical)))


def _read(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DataError(f"{path}: file is empty") from None
            rows = [row for row in reader if row]
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not valid UTF-8 ({exc})") from None
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: line {lineno} has {len(row)} fields, header has {len(header)}")
    return header, rows


def _to_float(cell, lineno, column, path):
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"{path}: line {lineno}, column '{column}': cannot parse {cell!r} as a number") from None


def ingest(path, mapping, standardize=False):
    """Load a comma-separated file into a :class:`Dataset`.

    Rows with a missing value in any mapped column are dropped and the count
    is logged. With ``standardize`` every covariate column is centred and
    scaled to unit (population) standard deviation.
    """
    header, rows = _read(path)
    needed = (mapping.outcome, mapping.treatment) + mapping.covariate_columns
    absent = [c for c in needed if c not in header]
    if absent:
        raise DataError(f"{path}: columns not found: {', '.join(absent)}")
    if not mapping.covariate_columns:
        raise DataError("at least one covariate column is required")
    pos = {c: header.index(c) for c in needed}

    kept = []
    for lineno, row in enumerate(rows, start=2):
        cells = {c: row[pos[c]].strip() for c in needed}
        if any(v in MISSING_TOKENS for v in cells.values()):
            continue
        kept.append((lineno, cells))
    dropped = len(rows) - len(kept)
    if dropped:
        log.warning("%d rows dropped for missing values in mapped columns", dropped)

    y = np.array([_to_float(c[mapping.outcome], ln, mapping.outcome, path) for ln, c in kept])
    d_raw = []
    for ln, c in kept:
        cell = c[mapping.treatment]
        try:
            d_raw.append(float(cell))
        except ValueError:
            raise DataError(
                f"{path}: line {ln}: treatment column '{mapping.treatment}' holds {cell!r}; "
                "recode it explicitly to 0/1"
            ) from None
    d = np.array(d_raw)
    bad = ~np.isin(d, (0.0, 1.0))
    if bad.any():
        first = int(np.argmax(bad))
        raise DataError(
            f"{path}: line {kept[first][0]}: treatment column '{mapping.treatment}' must be 0/1, "
            f"got {d[first]!r}"
        )

    columns, names = [], []
    for col in mapping.covariate_columns:
        if col in mapping.categorical:
            levels = sorted({c[col] for _, c in kept})
            for level in levels[1:]:
                columns.append(np.array([c[col] == level for _, c in kept], dtype=float))
                names.append(f"{col}={level}")
        else:
            columns.append(np.array([_to_float(c[col], ln, col, path) for ln, c in kept]))
            names.append(col)
    if not columns:
        raise DataError("covariates expand to zero columns")
    X = np.column_stack(columns)
    n, p = X.shape
    if n < p + 2:
        raise DataError(f"{path}: only {n} complete rows for {p} covariates (need at least {p + 2})")

    if standardize:
        sd = X.std(axis=0)
        constant = [nm for nm, s in zip(names, sd) if s == 0]
        if constant:
            raise DataError(f"cannot standardize constant covariate(s): {', '.join(constant)}")
        X = (X - X.mean(axis=0)) / sd
    elif np.any(np.abs(X.mean(axis=0)) > LARGE_SCALE) or np.any(X.std(axis=0) > LARGE_SCALE):
        log.warning(
            "covariates are far from unit scale; the Hermite sieve is evaluated at large "
            "index values (consider standardizing)"
        )
    return Dataset(y, d, X, tuple(names))


def write_dataset_csv(data, path, outcome="y", treatment="d"):
    """Write ``data`` with shortest round-trip float formatting (lossless)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([outcome, treatment, *data.column_names])
        for yi, di, xi in zip(data.outcome, data.treatment, data.covariates):
            w.writerow([repr(float(yi)), repr(float(di)), *(repr(float(v)) for v in xi)])
