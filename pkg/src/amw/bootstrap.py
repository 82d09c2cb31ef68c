"""Naive nonparametric bootstrap: standard errors and percentile intervals.

Replicate ``r`` resamples rows with its own generator derived from
``(seed, r, attempt)``, refits every nuisance model and recomputes the
estimators with K held fixed.  A replicate that fails is redrawn once; a
second failure is counted, never hidden.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Sequence

import numpy as np

from ._parallel import ordered_map
from ._rng import child_rng, derive_seed
from .data import Dataset, EstimandKind, EstimatorKind, ModelSpec
from .errors import AmwError, InvalidArgument, TooManyFailures
from .estimators import PointEstimate, evaluate, resolve_k
from .nuisance import FitOptions, fit_nuisance

Item = tuple[EstimatorKind, "int | None"]

# sub-stream keys under a user seed
BOOT_STREAM = 1
SPLIT_STREAM = 2


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    estimates: np.ndarray
    se: float
    ci_lower: float
    ci_upper: float
    b_requested: int
    b_failed: int
    seed: int
    alpha: float = 0.05

    def to_dict(self, with_estimates: bool = False) -> dict:
        out = {
            "se": self.se,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "alpha": self.alpha,
            "b_requested": self.b_requested,
            "b_failed": self.b_failed,
            "seed": self.seed,
        }
        if with_estimates:
            out["estimates"] = [float(v) for v in self.estimates]
        return out


@dataclass(frozen=True, eq=False)
class EstimateReport:
    point: PointEstimate
    boot: BootstrapResult | None
    k_used: int | None
    k_reports: tuple = ()

    def to_dict(self) -> dict:
        return {
            "point": self.point.to_dict(),
            "bootstrap": None if self.boot is None else self.boot.to_dict(),
            "k_used": self.k_used,
            "k_candidates": [r.to_dict() for r in self.k_reports],
        }


def percentile_interval(values: np.ndarray, alpha: float) -> tuple[float, float]:
    """Empirical (alpha/2, 1 - alpha/2) quantiles, linear interpolation."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return float("nan"), float("nan")
    lo, hi = np.quantile(values, [alpha / 2, 1 - alpha / 2], method="linear")
    return float(lo), float(hi)


def coverage(ci_list: Sequence[tuple[float, float]], truth: float) -> float:
    """Fraction of intervals containing ``truth`` (closed intervals)."""
    ci = np.asarray(ci_list, dtype=float).reshape(-1, 2)
    if ci.shape[0] == 0:
        raise InvalidArgument("coverage needs at least one interval")
    return float(np.mean((ci[:, 0] <= truth) & (truth <= ci[:, 1])))


def summarize(values: np.ndarray, b: int, alpha: float, seed: int) -> BootstrapResult:
    """Build a result from one column of replicate values (NaN = failed)."""
    values = np.asarray(values, dtype=float)
    ok = values[np.isfinite(values)]
    se = float(np.std(ok, ddof=1)) if ok.size >= 2 else float("nan")
    lo, hi = percentile_interval(ok, alpha)
    return BootstrapResult(ok, se, lo, hi, int(b), int(b - ok.size), int(seed), float(alpha))


def _evaluate_each(d, nuisance, spec, items, estimand) -> list[float | None]:
    try:
        return [float(v) for v in evaluate(d, nuisance, spec, items, estimand)]
    except AmwError:
        pass
    out: list[float | None] = []
    for item in items:
        try:
            (v,) = evaluate(d, nuisance, spec, [item], estimand)
            out.append(float(v))
        except AmwError:
            out.append(None)
    return out


def resample_rows(n: int, seed: int, r: int, attempt: int) -> np.ndarray:
    return child_rng(seed, r, attempt).integers(0, n, size=n)


def _replicate(r: int, d: Dataset, spec: ModelSpec, items: tuple, estimand, opts, seed) -> np.ndarray:
    out = np.full(len(items), np.nan)
    pending = list(range(len(items)))
    for attempt in (0, 1):
        db = d.take(resample_rows(d.n, seed, r, attempt))
        try:
            nuis = fit_nuisance(db, spec, opts)
        except AmwError:
            continue
        vals = _evaluate_each(db, nuis, spec, [items[i] for i in pending], estimand)
        still = []
        for i, v in zip(pending, vals):
            if v is None or not np.isfinite(v):
                still.append(i)
            else:
                out[i] = v
        pending = still
        if not pending:
            break
    return out


def bootstrap_matrix(d: Dataset, spec: ModelSpec, items: Sequence[Item], estimand, b: int,
                     seed: int, opts: FitOptions = FitOptions(), n_jobs: int = 1) -> np.ndarray:
    """Replicate values, shape (b, len(items)); NaN marks a failed replicate.

    All items are evaluated on the same resamples, so one nuisance fit per
    replicate serves every estimator (and every candidate K).
    """
    if b < 1:
        raise InvalidArgument(f"b must be >= 1, got {b}")
    items = tuple((EstimatorKind(kind), k) for kind, k in items)
    fn = partial(_replicate, d=d, spec=spec, items=items, estimand=EstimandKind(estimand),
                 opts=opts, seed=seed)
    rows = ordered_map(fn, range(b), n_jobs)
    return np.vstack(rows) if rows else np.empty((0, len(items)))


def bootstrap_panel(d, spec, items, estimand, b: int, alpha: float = 0.05, seed: int = 0,
                    opts: FitOptions = FitOptions(), n_jobs: int = 1) -> list[BootstrapResult]:
    _check_args(b, alpha)
    mat = bootstrap_matrix(d, spec, items, estimand, b, seed, opts, n_jobs)
    return [summarize(mat[:, j], b, alpha, seed) for j in range(mat.shape[1])]


def _check_args(b: int, alpha: float) -> None:
    if b < 2:
        raise InvalidArgument(f"b must be >= 2, got {b}")
    if not 0 < alpha < 1:
        raise InvalidArgument(f"alpha must lie in (0, 1), got {alpha}")


def _check_failures(res: BootstrapResult) -> BootstrapResult:
    if res.b_failed > res.b_requested / 2:
        raise TooManyFailures(
            f"{res.b_failed} of {res.b_requested} bootstrap replicates failed",
            b_failed=res.b_failed, b_requested=res.b_requested,
        )
    return res


def bootstrap(d: Dataset, spec: ModelSpec, kind, estimand, k_fixed: int | None, b: int = 100,
              alpha: float = 0.05, seed: int = 0, opts: FitOptions = FitOptions(),
              n_jobs: int = 1) -> BootstrapResult:
    """Bootstrap one estimator with K fixed."""
    (res,) = bootstrap_panel(d, spec, [(kind, k_fixed)], estimand, b, alpha, seed, opts, n_jobs)
    return _check_failures(res)


def run_estimate(d: Dataset, spec: ModelSpec, kind, estimand=EstimandKind.ATE, k=None, *,
                 b: int = 100, alpha: float = 0.05, seed: int = 0,
                 candidates: Sequence[int] | None = None, cv_boot_b: int = 100,
                 n_splits: int = 25, opts: FitOptions = FitOptions(),
                 n_jobs: int = 1) -> EstimateReport:
    """Point estimate, K selection when requested, and bootstrap inference.

    With ``k='auto'`` the CV variance step and the outer bootstrap draw from
    the same replicate streams, so each resample is fitted once and the
    outer bootstrap reads off the column of the selected K.  Pass ``b=0`` to
    skip the outer bootstrap.
    """
    from .kselect import candidate_grid, select_from_matrix

    kind = EstimatorKind(kind)
    estimand = EstimandKind(estimand)
    if b:
        _check_args(b, alpha)
    k_fixed = resolve_k(kind, k)
    boot_seed = derive_seed(seed, BOOT_STREAM)
    d.require_both_arms()
    spec.validate(d)

    reports: tuple = ()
    boot = None
    if k_fixed == "auto":
        cands = candidate_grid(d, estimand, candidates)
        items = [(EstimatorKind.AMW, c) for c in cands]
        mat = bootstrap_matrix(d, spec, items, estimand, max(cv_boot_b, b), boot_seed, opts, n_jobs)
        k_fixed, reports = select_from_matrix(d, spec, cands, mat[:cv_boot_b], n_splits,
                                              derive_seed(seed, SPLIT_STREAM), estimand, opts)
        if b:
            boot = _check_failures(summarize(mat[:b, cands.index(k_fixed)], b, alpha, boot_seed))
    elif b:
        boot = bootstrap(d, spec, kind, estimand, k_fixed, b, alpha, boot_seed, opts, n_jobs)

    nuisance = fit_nuisance(d, spec, opts)
    (value,) = evaluate(d, nuisance, spec, [(kind, k_fixed)], estimand)
    point = PointEstimate(float(value), kind, estimand, k_fixed, d.n)
    return EstimateReport(point, boot, k_fixed, tuple(reports))
