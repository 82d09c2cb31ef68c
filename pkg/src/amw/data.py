"""Core record types, validation and CSV ingestion."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    EmptyArm,
    InputError,
    InvalidArgument,
    MissingColumn,
    NonBinaryTreatment,
    NonFiniteValue,
    ZeroVariance,
)


class EstimandKind(str, enum.Enum):
    ATE = "ate"
    ATT = "att"

    @classmethod
    def _missing_(cls, value):
        # accept "AMW", "Ate", ...
        if isinstance(value, str):
            for member in cls:
                if member.value == value.lower():
                    return member
        return None


class EstimatorKind(str, enum.Enum):
    REG = "reg"
    IPW = "ipw"
    AIPW = "aipw"
    PSM = "psm"
    MATCH_X = "match_x"
    AMW = "amw"
    AMWF = "amwf"

    @classmethod
    def _missing_(cls, value):
        # accept "AMW", "Ate", ...
        if isinstance(value, str):
            for member in cls:
                if member.value == value.lower():
                    return member
        return None

    @property
    def uses_k(self) -> bool:
        return self in MATCHING_KINDS


MATCHING_KINDS = frozenset(
    {EstimatorKind.PSM, EstimatorKind.MATCH_X, EstimatorKind.AMW, EstimatorKind.AMWF}
)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcome ``y``, binary treatment ``a`` and covariates ``x`` (n x p).

    Arrays are copied and made read-only on construction.  Arm sizes are not
    enforced here because bootstrap resamples may legitimately lose an arm;
    estimation entry points call :meth:`require_both_arms`.
    """

    y: np.ndarray
    a: np.ndarray
    x: np.ndarray
    column_names: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        y = np.array(self.y, dtype=float).reshape(-1)
        a_raw = np.asarray(self.a)
        x = np.array(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        n = y.shape[0]
        if a_raw.shape[0] != n or x.shape[0] != n:
            raise InvalidArgument("y, a and x must have the same number of rows")
        names = tuple(str(c) for c in self.column_names)
        if len(names) != x.shape[1]:
            raise InvalidArgument("column_names must have one label per column of x")
        if len(set(names)) != len(names):
            raise InvalidArgument("column names must be unique")

        a_float = np.asarray(a_raw, dtype=float)
        bad = np.flatnonzero(~((a_float == 0) | (a_float == 1)))
        if bad.size:
            raise NonBinaryTreatment(
                f"treatment must be 0 or 1 (row {int(bad[0])} has {a_raw[bad[0]]!r})",
                row=int(bad[0]),
            )
        bad_y = np.flatnonzero(~np.isfinite(y))
        if bad_y.size:
            raise NonFiniteValue(f"non-finite outcome in row {int(bad_y[0])}", row=int(bad_y[0]), column="y")
        bad_x = np.argwhere(~np.isfinite(x))
        if bad_x.size:
            r, c = (int(v) for v in bad_x[0])
            raise NonFiniteValue(f"non-finite covariate {names[c]!r} in row {r}", row=r, column=names[c])

        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "a", _frozen(a_float.astype(np.int8)))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(names)})

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def n1(self) -> int:
        return int(self.a.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    def require_both_arms(self) -> None:
        if self.n1 == 0 or self.n0 == 0:
            raise EmptyArm(f"need both arms, got n1={self.n1}, n0={self.n0}", n1=self.n1, n0=self.n0)

    def column_indices(self, names: Sequence[str]) -> list[int]:
        missing = [c for c in names if c not in self._index]
        if missing:
            raise MissingColumn(f"unknown column(s): {', '.join(missing)}", column=missing[0])
        return [self._index[c] for c in names]

    def columns(self, names: Sequence[str]) -> np.ndarray:
        return self.x[:, self.column_indices(names)]

    def design(self, names: Sequence[str], intercept: bool = True) -> np.ndarray:
        cols = self.columns(names)
        if intercept:
            return np.column_stack([np.ones(self.n), cols])
        return np.ascontiguousarray(cols)

    def take(self, rows: np.ndarray) -> "Dataset":
        """Row subset (with repetition allowed), e.g. a bootstrap resample."""
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.y[rows], self.a[rows], self.x[rows], self.column_names)

    def with_outcome(self, y: np.ndarray) -> "Dataset":
        return Dataset(y, self.a, self.x, self.column_names)


@dataclass(frozen=True)
class ModelSpec:
    """Which covariates enter the propensity and outcome models."""

    propensity_columns: tuple[str, ...]
    outcome_columns: tuple[str, ...]
    propensity_intercept: bool = True
    outcome_intercept: bool = True
    outcome_family: str = "linear"

    def __post_init__(self) -> None:
        object.__setattr__(self, "propensity_columns", tuple(self.propensity_columns))
        object.__setattr__(self, "outcome_columns", tuple(self.outcome_columns))
        if self.outcome_family not in ("linear", "logistic"):
            raise InvalidArgument(f"outcome_family must be 'linear' or 'logistic', got {self.outcome_family!r}")
        if not self.propensity_columns and not self.propensity_intercept:
            raise InvalidArgument("propensity model needs at least one regressor")
        if not self.outcome_columns and not self.outcome_intercept:
            raise InvalidArgument("outcome model needs at least one regressor")

    @classmethod
    def same(cls, columns: Sequence[str], **kw) -> "ModelSpec":
        return cls(tuple(columns), tuple(columns), **kw)

    def validate(self, d: Dataset) -> None:
        d.column_indices(self.propensity_columns)
        d.column_indices(self.outcome_columns)

    @property
    def n_outcome_regressors(self) -> int:
        return len(self.outcome_columns) + int(self.outcome_intercept)


def _parse_float(raw: str, row: int, column: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise NonFiniteValue(f"row {row}, column {column!r}: not a number: {raw!r}", row=row, column=column) from None
    if not math.isfinite(value):
        raise NonFiniteValue(f"row {row}, column {column!r}: non-finite value {raw!r}", row=row, column=column)
    return value


def _read_records(reader, path, y_col, a_col, x_cols):
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MissingColumn(f"{path}: empty file, no header row") from None
    idx = {name: i for i, name in enumerate(header)}
    wanted = [y_col, a_col, *x_cols]
    missing = [c for c in wanted if c not in idx]
    if missing:
        raise MissingColumn(f"column(s) not in header: {', '.join(missing)}", column=missing[0])

    ys, as_, xs = [], [], []
    for row_no, rec in enumerate(reader, start=1):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) != len(header):
            raise InputError(f"row {row_no} has {len(rec)} fields, header has {len(header)}", row=row_no)
        ys.append(_parse_float(rec[idx[y_col]], row_no, y_col))
        a_val = _parse_float(rec[idx[a_col]], row_no, a_col)
        if a_val not in (0.0, 1.0):
            raise NonBinaryTreatment(
                f"row {row_no}: treatment must be 0 or 1, got {rec[idx[a_col]]!r}", row=row_no
            )
        as_.append(a_val)
        xs.append([_parse_float(rec[idx[c]], row_no, c) for c in x_cols])
    return ys, as_, xs


def load_csv(path: str | Path, y_col: str, a_col: str, x_cols: Sequence[str]) -> Dataset:
    """Read a header-first CSV into a validated :class:`Dataset`.

    Row numbers in error payloads are 1-based data rows (the header is not
    counted), so ``row=3`` is the third record.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            ys, as_, xs = _read_records(csv.reader(fh), path, y_col, a_col, x_cols)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}", path=str(path)) from None
    except (UnicodeDecodeError, csv.Error) as exc:
        raise InputError(f"{path}: malformed CSV ({exc})", path=str(path)) from None

    x = np.array(xs, dtype=float).reshape(len(xs), len(x_cols))
    d = Dataset(np.array(ys), np.array(as_), x, tuple(x_cols))
    d.require_both_arms()
    return d


def standardize_columns(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centre and scale each column with sample moments (n-1 denominator)."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x.reshape(-1, 1)
    means = x.mean(axis=0)
    sds = x.std(axis=0, ddof=1)
    # relative threshold: constant columns give sd at rounding level, not exactly 0
    scale = np.maximum(np.abs(means), 1.0)
    zero = np.flatnonzero(~(sds > 1e-12 * scale))
    if zero.size:
        raise ZeroVariance(f"column {int(zero[0])} has zero variance", column=int(zero[0]))
    z = (x - means) / sds
    if squeeze:
        z = z.reshape(-1)
    return z, means, sds
