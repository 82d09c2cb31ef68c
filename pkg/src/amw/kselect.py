"""Cross-validated choice of the number of matches K.

The estimated MSE of AMW(K) is a bootstrap variance plus the square of a
split-half bias estimate.  Bias is anchored at K = 1: each repetition splits
the data into two arm-stratified halves, refits both from scratch, and
compares AMW(K) on the first half with AMW(1) on the second.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._rng import child_rng, derive_seed
from .bootstrap import BOOT_STREAM, SPLIT_STREAM, bootstrap_matrix
from .data import Dataset, EstimandKind, EstimatorKind, ModelSpec
from .errors import AmwError, InvalidArgument, SplitTooSmall
from .estimators import _check_k, propensity_match, reg_value
from .matching import MatchResult
from .nuisance import FitOptions, FittedNuisance, fit_nuisance

DEFAULT_GRID = (1, 2, 4, 8, 16, 32, 64)
TIE_RTOL = 1e-10


@dataclass(frozen=True)
class KCandidateReport:
    k: int
    var_hat: float
    bias_hat: float
    mse_hat: float
    n_splits: int

    def to_dict(self) -> dict:
        return {"k": self.k, "var_hat": self.var_hat, "bias_hat": self.bias_hat,
                "mse_hat": self.mse_hat, "n_splits": self.n_splits}


@dataclass(frozen=True)
class BTerm:
    """K-dependent part ``value`` of AMW(K); ``constant`` is the K-free rest."""

    value: float
    k: int
    constant: float


def compute_b_term(d: Dataset, nuisance: FittedNuisance, k: int, estimand=EstimandKind.ATE,
                   match: MatchResult | None = None) -> BTerm:
    estimand = EstimandKind(estimand)
    _check_k(d, k, estimand)
    if match is None:
        match = propensity_match(d, nuisance, k, estimand)
    elif match.k != k:
        match = match.truncate(k)
    a = d.a.astype(float)
    r = nuisance.residual
    mk = match.match_count / k
    reg = reg_value(d, nuisance, estimand)
    if estimand is EstimandKind.ATE:
        b = np.mean((2 * a - 1) * mk * r)
        c = reg + np.mean((2 * a - 1) * r)
    else:
        b = -np.sum((1 - a) * mk * r) / d.n1
        c = reg + np.sum((2 * a - 1) * r) / d.n1
    return BTerm(float(b), int(k), float(c))


def candidate_grid(d: Dataset, estimand=EstimandKind.ATE,
                   candidates: Iterable[int] | None = None) -> list[int]:
    """Sorted unique candidates with 1 prepended; default geometric grid."""
    if candidates is None:
        limit = min(d.n1, d.n0) / 2
        return [k for k in DEFAULT_GRID if k == 1 or k <= limit]
    ks = sorted({int(k) for k in candidates})
    if not ks or ks[0] < 1:
        raise InvalidArgument(f"candidates must be positive integers, got {ks}")
    if ks[0] != 1:
        ks.insert(0, 1)
    return ks


def stratified_halves(a: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Random halves that split each arm as evenly as possible."""
    first, second = [], []
    for arm in (0, 1):
        idx = rng.permutation(np.flatnonzero(a == arm))
        h = idx.size // 2
        first.append(idx[:h])
        second.append(idx[h:])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


def _amw_many(d, spec, ks, estimand, opts) -> np.ndarray:
    from .estimators import evaluate

    nuis = fit_nuisance(d, spec, opts)
    return np.asarray(evaluate(d, nuis, spec, [(EstimatorKind.AMW, k) for k in ks], estimand))


def _check_split(d: Dataset, spec: ModelSpec, kmax: int, estimand) -> None:
    h1, h0 = d.n1 // 2, d.n0 // 2
    need = max(spec.n_outcome_regressors + 1, 1)
    limit = min(h1, h0) if EstimandKind(estimand) is EstimandKind.ATE else h0
    if min(h1, h0) < need or kmax > limit:
        raise SplitTooSmall(
            f"half samples with n1={h1}, n0={h0} cannot support k={kmax} "
            f"and {need} units per arm",
            n1_half=h1, n0_half=h0, k=int(kmax),
        )


def split_biases(d: Dataset, spec: ModelSpec, ks: Sequence[int], n_splits: int, seed: int,
                 estimand=EstimandKind.ATE, opts: FitOptions = FitOptions()) -> np.ndarray:
    """Split-half bias estimates for every k in ``ks`` (exactly 0 at k = 1)."""
    if n_splits < 1:
        raise InvalidArgument(f"n_splits must be >= 1, got {n_splits}")
    ks = [int(k) for k in ks]
    out = np.zeros(len(ks))
    todo = [i for i, k in enumerate(ks) if k != 1]
    if not todo:
        return out
    sub = [ks[i] for i in todo]
    _check_split(d, spec, max(sub), estimand)
    acc = np.zeros(len(sub))
    for s in range(n_splits):
        for attempt in (0, 1):
            h1, h2 = stratified_halves(d.a, child_rng(seed, s, attempt))
            try:
                first = _amw_many(d.take(h1), spec, sub, estimand, opts)
                (anchor,) = _amw_many(d.take(h2), spec, [1], estimand, opts)
                break
            except AmwError:
                if attempt == 1:
                    raise
        acc += first - anchor
    out[todo] = acc / n_splits
    return out


def cv_bias(d: Dataset, spec: ModelSpec, k: int, n_splits: int = 25, rng_seed: int = 0,
            estimand=EstimandKind.ATE, opts: FitOptions = FitOptions()) -> float:
    """Average of AMW(k) on one half minus AMW(1) on the other half.

    Uses the same split streams as :func:`select_k` with the same seed.
    """
    if int(k) == 1:
        return 0.0
    seed = derive_seed(rng_seed, SPLIT_STREAM)
    return float(split_biases(d, spec, [k], n_splits, seed, estimand, opts)[0])


def select_from_matrix(d: Dataset, spec: ModelSpec, candidates: Sequence[int], boot_values: np.ndarray,
                       n_splits: int, split_seed: int, estimand=EstimandKind.ATE,
                       opts: FitOptions = FitOptions()) -> tuple[int, list[KCandidateReport]]:
    """Select K given bootstrap replicates of AMW(k), one column per candidate."""
    bias = split_biases(d, spec, candidates, n_splits, split_seed, estimand, opts)
    reports = []
    for j, k in enumerate(candidates):
        col = boot_values[:, j]
        col = col[np.isfinite(col)]
        var = float(np.var(col, ddof=1)) if col.size >= 2 else float("nan")
        b = float(bias[j])
        reports.append(KCandidateReport(int(k), var, b, var + b * b, int(n_splits)))
    mse = np.array([r.mse_hat for r in reports])
    if np.all(np.isnan(mse)):
        raise InvalidArgument("no candidate K has a usable bootstrap variance")
    # ties go to the smaller k; MSEs within rounding of the outcome scale count as ties
    tol = (TIE_RTOL * float(np.max(np.abs(d.y)))) ** 2
    best = int(np.flatnonzero(mse <= np.nanmin(mse) + tol)[0])
    return reports[best].k, reports


def select_k(d: Dataset, spec: ModelSpec, candidates: Iterable[int] | None = None,
             boot_b: int = 100, n_splits: int = 25, rng_seed: int = 0,
             estimand=EstimandKind.ATE, opts: FitOptions = FitOptions(),
             n_jobs: int = 1) -> tuple[int, list[KCandidateReport]]:
    """Pick the candidate K with the smallest estimated MSE."""
    if boot_b < 2:
        raise InvalidArgument(f"boot_b must be >= 2, got {boot_b}")
    d.require_both_arms()
    spec.validate(d)
    cands = candidate_grid(d, estimand, candidates)
    mat = bootstrap_matrix(d, spec, [(EstimatorKind.AMW, k) for k in cands], estimand, boot_b,
                           derive_seed(rng_seed, BOOT_STREAM), opts, n_jobs)
    return select_from_matrix(d, spec, cands, mat, n_splits,
                              derive_seed(rng_seed, SPLIT_STREAM), estimand, opts)
