"""K-nearest-neighbour matching with replacement.

Units are matched into the opposite arm on a scalar score (usually the
estimated propensity score) or on standardized covariates.  Distance ties
are broken by lowest original unit index, so results are reproducible.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _backend
from .data import Dataset, EstimandKind, standardize_columns
from .errors import EmptyOppositeArm, IncompatibleEstimand, InvalidArgument, NonFiniteValue
from .nuisance import FittedNuisance


class MatchDirection(str, enum.Enum):
    BOTH = "both"
    TREATED_TO_CONTROL = "treated_to_control"


class MatchVariable(str, enum.Enum):
    X = "x"
    PROPENSITY = "propensity"


def direction_for(estimand: EstimandKind) -> MatchDirection:
    return MatchDirection.BOTH if EstimandKind(estimand) is EstimandKind.ATE else MatchDirection.TREATED_TO_CONTROL


@dataclass(frozen=True, eq=False)
class MatchResult:
    """Neighbour sets J(i) for every matched unit plus match counts.

    ``neighbors[r, :sizes[r]]`` is J(units[r]) ordered by (distance, index);
    slots past ``sizes[r]`` hold -1 (only when an arm is smaller than k).
    """

    k: int
    direction: MatchDirection
    units: np.ndarray
    neighbors: np.ndarray
    distances: np.ndarray
    sizes: np.ndarray
    match_count: np.ndarray
    match_weight: np.ndarray

    @property
    def max_distance(self) -> np.ndarray:
        rows = np.arange(self.units.shape[0])
        return self.distances[rows, self.sizes - 1]

    def neighbor_set(self, unit: int) -> list[int]:
        r = np.searchsorted(self.units, unit)
        if r >= self.units.shape[0] or self.units[r] != unit:
            raise KeyError(unit)
        return [int(j) for j in self.neighbors[r, : self.sizes[r]]]

    def truncate(self, k: int) -> "MatchResult":
        """Matches for a smaller k: J_k(i) is the first k entries of J_K(i)."""
        if k < 1 or k > self.k:
            raise InvalidArgument(f"can only truncate to 1..{self.k}, got {k}")
        nb = self.neighbors[:, :k]
        ds = self.distances[:, :k]
        return _assemble(k, self.direction, self.units, nb, ds, self.match_count.shape[0])


def _assemble(k, direction, units, neighbors, distances, n) -> MatchResult:
    if neighbors.size == 0 or neighbors.min() >= 0:
        # no padding: every set has exactly neighbors.shape[1] members
        width = neighbors.shape[1]
        sizes = np.full(neighbors.shape[0], width, dtype=np.intp)
        counts = np.bincount(neighbors.ravel(), minlength=n)
        weight = counts / width if width else counts.astype(float)
    else:
        valid = neighbors >= 0
        sizes = valid.sum(axis=1)
        flat = neighbors[valid]
        counts = np.bincount(flat, minlength=n)
        per_slot = np.broadcast_to((1.0 / np.maximum(sizes, 1))[:, None], neighbors.shape)[valid]
        weight = np.bincount(flat, weights=per_slot, minlength=n)
    return MatchResult(
        k=int(k),
        direction=MatchDirection(direction),
        units=units,
        neighbors=neighbors,
        distances=distances,
        sizes=sizes,
        match_count=counts,
        match_weight=weight,
    )


def _pad(nb: np.ndarray, ds: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    if nb.shape[1] == k:
        return nb, ds
    pad = k - nb.shape[1]
    return (
        np.pad(nb, ((0, 0), (0, pad)), constant_values=-1),
        np.pad(ds, ((0, 0), (0, pad)), constant_values=np.nan),
    )


def _query_arms(a: np.ndarray, direction: MatchDirection):
    treated = np.flatnonzero(a == 1)
    control = np.flatnonzero(a == 0)
    if direction is MatchDirection.BOTH:
        return [(treated, control), (control, treated)]
    return [(treated, control)]


def knn_match(scores, a, k: int, direction: MatchDirection | str = MatchDirection.BOTH,
              kernel=None) -> MatchResult:
    """Match on a scalar score with sort-based 1-D search.

    ``kernel`` overrides the backend chosen at import (used by tests and the
    benchmark to compare the compiled and numpy kernels).
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    a = np.asarray(a).reshape(-1)
    direction = MatchDirection(direction)
    if k < 1:
        raise InvalidArgument(f"k must be >= 1, got {k}")
    if not np.all(np.isfinite(scores)):
        raise NonFiniteValue("matching scores must be finite")
    kernel = kernel or _backend.knn_sorted
    n = scores.shape[0]

    blocks = []
    for query_units, ref_units in _query_arms(a, direction):
        if query_units.size and not ref_units.size:
            raise EmptyOppositeArm("no units in the opposite arm to match into")
        order = np.lexsort((ref_units, scores[ref_units]))
        ref_sorted = np.ascontiguousarray(ref_units[order], dtype=np.int64)
        nb, ds = kernel(np.ascontiguousarray(scores[query_units]),
                        np.ascontiguousarray(scores[ref_sorted]), ref_sorted, k)
        blocks.append((query_units, *_pad(nb, ds, k)))
    return _combine(k, direction, blocks, n)


def _combine(k, direction, blocks, n) -> MatchResult:
    if len(blocks) == 1:
        return _assemble(k, direction, *blocks[0], n)
    units = np.concatenate([b[0] for b in blocks])
    nb = np.concatenate([b[1] for b in blocks])
    ds = np.concatenate([b[2] for b in blocks])
    order = np.argsort(units, kind="stable")
    return _assemble(k, direction, units[order], nb[order], ds[order], n)


def knn_match_x(x, a, k: int, direction: MatchDirection | str = MatchDirection.BOTH,
                standardize: bool = True) -> MatchResult:
    """Brute-force Euclidean matching on (standardized) covariate rows."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    a = np.asarray(a).reshape(-1)
    direction = MatchDirection(direction)
    if k < 1:
        raise InvalidArgument(f"k must be >= 1, got {k}")
    if standardize:
        x, _, _ = standardize_columns(x)
    n = x.shape[0]
    blocks = []
    for query_units, ref_units in _query_arms(a, direction):
        if query_units.size and not ref_units.size:
            raise EmptyOppositeArm("no units in the opposite arm to match into")
        kk = min(k, ref_units.size)
        diff = x[query_units][:, None, :] - x[ref_units][None, :, :]
        dist = np.sqrt(np.einsum("qrj,qrj->qr", diff, diff))
        idx = np.broadcast_to(ref_units, dist.shape)
        order = np.lexsort((idx, dist), axis=1)[:, :kk]
        nb = np.take_along_axis(idx, order, axis=1).astype(np.int64)
        ds = np.take_along_axis(dist, order, axis=1)
        blocks.append((query_units, *_pad(nb, ds, k)))
    return _combine(k, direction, blocks, n)


@dataclass(frozen=True, eq=False)
class ImputedOutcomes:
    """Imputed potential outcomes; NaN where a direction leaves a value unimputed."""

    yhat1: np.ndarray
    yhat0: np.ndarray


def _neighbor_mean(values: np.ndarray, m: MatchResult) -> np.ndarray:
    valid = m.neighbors >= 0
    vals = np.where(valid, values[np.maximum(m.neighbors, 0)], 0.0)
    return vals.sum(axis=1) / m.sizes


def impute_simple(d: Dataset, m: MatchResult) -> ImputedOutcomes:
    """Observed arm keeps Y_i; the other arm is the mean outcome over J(i)."""
    return impute_bias_corrected(d, m, np.zeros(d.n), np.zeros(d.n))


def impute_bias_corrected(d: Dataset, m: MatchResult, u0: np.ndarray, u1: np.ndarray) -> ImputedOutcomes:
    """Counterfactual = mean over J(i) of Y_j + u_a(V_i) - u_a(V_j)."""
    y = d.y
    yhat1 = np.where(d.a == 1, y, np.nan)
    yhat0 = np.where(d.a == 0, y, np.nan)
    units = m.units
    treated_rows = d.a[units] == 1
    u0 = np.asarray(u0, dtype=float)
    u1 = np.asarray(u1, dtype=float)
    # Y_j - u_a(V_j) for every unit; the arm of j is the one being imputed
    adj = np.where(d.a == 1, y - u1, y - u0)
    mean_adj = _neighbor_mean(adj, m)
    t_units = units[treated_rows]
    c_units = units[~treated_rows]
    yhat0[t_units] = mean_adj[treated_rows] + u0[t_units]
    yhat1[c_units] = mean_adj[~treated_rows] + u1[c_units]
    return ImputedOutcomes(yhat1=yhat1, yhat0=yhat0)


def _check_direction(m: MatchResult, estimand: EstimandKind) -> EstimandKind:
    estimand = EstimandKind(estimand)
    if estimand is EstimandKind.ATE and m.direction is not MatchDirection.BOTH:
        raise IncompatibleEstimand("ATE needs matches in both directions")
    return estimand


def _contrast(d: Dataset, imp: ImputedOutcomes, estimand: EstimandKind) -> float:
    if estimand is EstimandKind.ATE:
        return float(np.mean(imp.yhat1 - imp.yhat0))
    t = d.a == 1
    return float(np.mean(imp.yhat1[t] - imp.yhat0[t]))


def match_estimate_simple(d: Dataset, m: MatchResult, estimand: EstimandKind | str) -> float:
    """Plain matching estimator from the imputed potential outcomes."""
    estimand = _check_direction(m, estimand)
    return _contrast(d, impute_simple(d, m), estimand)


def match_estimate_weighted(d: Dataset, m: MatchResult, estimand: EstimandKind | str) -> float:
    """The same estimator written as a weighted sum of observed outcomes."""
    estimand = _check_direction(m, estimand)
    a = d.a.astype(float)
    w = m.match_weight
    if estimand is EstimandKind.ATE:
        return float(np.mean((2 * a - 1) * (1 + w) * d.y))
    return float(np.sum((a - (1 - a) * w) * d.y) / d.n1)


def propensity_outcome_fit(d: Dataset, e_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-arm linear regression of Y on (1, e_hat), predicted for every unit.

    Uses the minimum-norm least-squares solution so a constant score gives a
    finite, deterministic intercept-only fit.
    """
    design = np.column_stack([np.ones(d.n), e_hat])
    preds = []
    for arm in (0, 1):
        rows = d.a == arm
        coef, *_ = np.linalg.lstsq(design[rows], d.y[rows], rcond=None)
        preds.append(design @ coef)
    return preds[0], preds[1]


def match_estimate_bias_corrected(d: Dataset, m: MatchResult, nuisance: FittedNuisance,
                                  estimand: EstimandKind | str,
                                  variable: MatchVariable | str = MatchVariable.X) -> float:
    """Bias-corrected matching estimator.

    With ``variable=X`` the correction uses the nuisance outcome models; with
    ``PROPENSITY`` it uses a per-arm linear regression of Y on the estimated
    propensity score, i.e. the classical bias-corrected PSM estimator.
    """
    estimand = _check_direction(m, estimand)
    if MatchVariable(variable) is MatchVariable.X:
        u0, u1 = nuisance.u0_hat, nuisance.u1_hat
    else:
        u0, u1 = propensity_outcome_fit(d, nuisance.e_hat)
    imp = impute_bias_corrected(d, m, u0, u1)
    return _contrast(d, imp, estimand)


def linear_form(d: Dataset, m: MatchResult, u0: np.ndarray, u1: np.ndarray,
                estimand: EstimandKind | str) -> float:
    """Regression term plus match-weighted residuals.

    Algebraically equal to :func:`match_estimate_bias_corrected` with the same
    outcome predictions; kept separate so the two routes can check each other.
    """
    estimand = _check_direction(m, estimand)
    a = d.a.astype(float)
    r = np.where(d.a == 1, d.y - u1, d.y - u0)
    w = m.match_weight
    if estimand is EstimandKind.ATE:
        return float(np.mean(u1 - u0) + np.mean((2 * a - 1) * (1 + w) * r))
    n1 = d.n1
    return float(np.sum(a * (u1 - u0)) / n1 + np.sum(a * r - (1 - a) * w * r) / n1)
