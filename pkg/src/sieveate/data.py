"""Observational data container."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["DataError", "Dataset"]


class DataError(ValueError):
    """Raised when observations violate the dataset contract."""


def _frozen(a, ndim, name):
    a = np.array(a, dtype=float)
    if a.ndim != ndim:
        raise DataError(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DataError(f"{name} contains non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observations ``(Y, D, X)``.

    Arrays are copied on construction and made read-only.
    """

    outcome: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray
    column_names: tuple = field(default=())

    def __post_init__(self):
        y = _frozen(self.outcome, 1, "outcome")
        d = _frozen(self.treatment, 1, "treatment")
        x = np.asarray(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        x = _frozen(x, 2, "covariates")
        n = y.shape[0]
        if d.shape[0] != n or x.shape[0] != n:
            raise DataError(
                f"length mismatch: outcome {n}, treatment {d.shape[0]}, covariates {x.shape[0]}"
            )
        if not np.all((d == 0) | (d == 1)):
            raise DataError("treatment must be coded 0/1")
        if d.min() == d.max():
            raise DataError("treatment has no variation: need at least one treated and one control")
        names = tuple(self.column_names) or tuple(f"x{j + 1}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DataError(f"{len(names)} column names for {x.shape[1]} covariates")
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "treatment", d)
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self):
        return self.outcome.shape[0]

    @property
    def p(self):
        return self.covariates.shape[1]

    def subset(self, idx):
        return Dataset(self.outcome[idx], self.treatment[idx], self.covariates[idx], self.column_names)

    def stacked(self, copies=2):
        """Dataset made of ``copies`` verbatim copies of this one."""
        return Dataset(
            np.tile(self.outcome, copies),
            np.tile(self.treatment, copies),
            np.tile(self.covariates, (copies, 1)),
            self.column_names,
        )
