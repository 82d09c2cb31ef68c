"""Standardized differences of covariates before and after match weighting.

The denominator is computed once from the unweighted pre-matching sample,
so the "before" and "after" columns are on the same scale.  Two
denominators are offered: the standard deviation of the pooled sample
(``"pooled_sample"``, the default) and the root mean of the two within-arm
variances (``"arm_average"``).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset, EstimandKind
from .errors import IncompatibleEstimand, InvalidArgument, ZeroDenominator
from .estimators import _check_k
from .matching import MatchDirection, MatchResult, direction_for, knn_match
from .nuisance import FittedNuisance

DENOMINATORS = ("pooled_sample", "arm_average")


def balance_scale(x_col: np.ndarray, a: np.ndarray, denominator: str = "pooled_sample") -> float:
    x_col = np.asarray(x_col, dtype=float)
    a = np.asarray(a)
    if denominator == "pooled_sample":
        return float(np.std(x_col, ddof=1))
    if denominator == "arm_average":
        s1 = np.var(x_col[a == 1], ddof=1)
        s0 = np.var(x_col[a == 0], ddof=1)
        return float(np.sqrt((s1 + s0) / 2))
    raise InvalidArgument(f"denominator must be one of {DENOMINATORS}, got {denominator!r}")


def std_diff(x_col, a, w=None, denominator: str = "pooled_sample") -> float:
    """(weighted treated mean - weighted control mean) / unweighted scale."""
    x_col = np.asarray(x_col, dtype=float)
    a = np.asarray(a)
    w = np.ones_like(x_col) if w is None else np.asarray(w, dtype=float)
    t, c = a == 1, a == 0
    wt, wc = w[t].sum(), w[c].sum()
    if not (wt > 0 and wc > 0):
        raise ZeroDenominator("both arms need positive total weight")
    scale = balance_scale(x_col, a, denominator)
    if not scale > 0:
        raise ZeroDenominator("covariate has zero spread", scale=scale)
    diff = np.dot(w[t], x_col[t]) / wt - np.dot(w[c], x_col[c]) / wc
    return float(diff / scale)


def match_weights(a: np.ndarray, match: MatchResult, estimand) -> np.ndarray:
    """1 + M/K for every unit (ATE); A + (1 - A) M/K (ATT)."""
    a = np.asarray(a).astype(float)
    mk = match.match_count / match.k
    if EstimandKind(estimand) is EstimandKind.ATE:
        if match.direction is not MatchDirection.BOTH:
            raise IncompatibleEstimand("ATE weights need matches in both directions")
        return 1.0 + mk
    return a + (1.0 - a) * mk


@dataclass(frozen=True)
class BalanceRow:
    covariate: str
    before: float
    after: float


@dataclass(frozen=True)
class BalanceTable:
    rows: tuple[BalanceRow, ...]
    estimand: EstimandKind
    k_used: int
    denominator: str = "pooled_sample"
    weights: str = "match_counts"

    def to_csv(self, digits: int | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("covariate", "before", "after"))
        for r in self.rows:
            vals = (r.before, r.after) if digits is None else (round(r.before, digits), round(r.after, digits))
            w.writerow((r.covariate, *(repr(float(v)) for v in vals)))
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "estimand": self.estimand.value,
            "k_used": self.k_used,
            "denominator": self.denominator,
            "weights": self.weights,
            "rows": [{"covariate": r.covariate, "before": r.before, "after": r.after} for r in self.rows],
        }


def balance_table(d: Dataset, nuisance: FittedNuisance | None, match: MatchResult | int, estimand,
                  columns: Sequence[str] | None = None,
                  denominator: str = "pooled_sample") -> BalanceTable:
    """One row per covariate: unit weights before, match weights after.

    ``match`` is either a precomputed match or a K, in which case units are
    matched on ``nuisance.e_hat``.
    """
    estimand = EstimandKind(estimand)
    if not isinstance(match, MatchResult):
        if nuisance is None:
            raise InvalidArgument("a fitted nuisance is needed to match with a given K")
        _check_k(d, match, estimand)
        match = knn_match(nuisance.e_hat, d.a, int(match), direction_for(estimand))
    columns = tuple(columns) if columns is not None else d.column_names
    w = match_weights(d.a, match, estimand)
    rows = []
    for name, col in zip(columns, d.columns(columns).T):
        rows.append(BalanceRow(name, std_diff(col, d.a, None, denominator),
                               std_diff(col, d.a, w, denominator)))
    return BalanceTable(tuple(rows), estimand, match.k, denominator)
