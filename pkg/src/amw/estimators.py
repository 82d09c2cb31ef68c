"""Regression, IPW, AIPW, PSM and augmented match weighted (AMW) estimators.

Every estimator is a pure function of a dataset and its fitted nuisance
models.  AMW replaces the inverse propensity weights of AIPW with matching
weights ``1 + M_i / K``, where ``M_i`` counts how often unit ``i`` is among
the K nearest opposite-arm neighbours on the estimated propensity score.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset, EstimandKind, EstimatorKind, ModelSpec, MATCHING_KINDS
from .errors import DegeneratePropensity, IncompatibleEstimand, InvalidArgument, KTooLarge
from .matching import (
    MatchResult,
    MatchVariable,
    direction_for,
    knn_match,
    knn_match_x,
    match_estimate_bias_corrected,
)
from .nuisance import FitOptions, FittedNuisance, fit_nuisance


@dataclass(frozen=True)
class PointEstimate:
    value: float
    estimator: EstimatorKind
    estimand: EstimandKind
    k_used: int | None
    n_used: int

    def __post_init__(self) -> None:
        if (self.k_used is not None) != (self.estimator in MATCHING_KINDS):
            raise InvalidArgument("k_used must be set exactly for matching estimators")

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "estimator": self.estimator.value,
            "estimand": self.estimand.value,
            "k_used": self.k_used,
            "n_used": self.n_used,
        }


def _pe(value, kind, estimand, k, d) -> PointEstimate:
    return PointEstimate(float(value), EstimatorKind(kind), EstimandKind(estimand), k, d.n)


def _check_propensity(nuisance: FittedNuisance) -> np.ndarray:
    e = nuisance.e_hat
    if np.any(e <= 0.0) or np.any(e >= 1.0):
        raise DegeneratePropensity("estimated propensity score is exactly 0 or 1")
    return e


def reg_value(d: Dataset, nuisance: FittedNuisance, estimand: EstimandKind | str) -> float:
    diff = nuisance.u1_hat - nuisance.u0_hat
    if EstimandKind(estimand) is EstimandKind.ATE:
        return float(np.mean(diff))
    return float(np.sum(diff[d.a == 1]) / d.n1)


def reg_estimate(d, nuisance, estimand) -> PointEstimate:
    return _pe(reg_value(d, nuisance, estimand), EstimatorKind.REG, estimand, None, d)


def ipw_estimate(d: Dataset, nuisance: FittedNuisance, estimand) -> PointEstimate:
    e = _check_propensity(nuisance)
    a = d.a.astype(float)
    y = d.y
    if EstimandKind(estimand) is EstimandKind.ATE:
        value = np.mean(a * y / e - (1 - a) * y / (1 - e))
    else:
        value = np.sum(a * y - (1 - a) * y * e / (1 - e)) / d.n1
    return _pe(value, EstimatorKind.IPW, estimand, None, d)


def aipw_estimate(d: Dataset, nuisance: FittedNuisance, estimand) -> PointEstimate:
    """Regression estimator plus inverse-propensity weighted residuals."""
    e = _check_propensity(nuisance)
    a = d.a.astype(float)
    r = nuisance.residual
    reg = reg_value(d, nuisance, estimand)
    if EstimandKind(estimand) is EstimandKind.ATE:
        value = reg + np.mean(a * r / e - (1 - a) * r / (1 - e))
    else:
        value = reg + np.sum(a * r - (1 - a) * r * e / (1 - e)) / d.n1
    return _pe(value, EstimatorKind.AIPW, estimand, None, d)


def aipw_weighting_form(d: Dataset, nuisance: FittedNuisance) -> float:
    """ATE AIPW written as weighted outcomes minus centred regression terms."""
    e = _check_propensity(nuisance)
    a = d.a.astype(float)
    y = d.y
    return float(np.mean(
        a * y / e - (1 - a) * y / (1 - e)
        - (a - e) / e * nuisance.u1_hat
        - (a - e) / (1 - e) * nuisance.u0_hat
    ))


def max_k(d: Dataset, estimand) -> int:
    return min(d.n1, d.n0) if EstimandKind(estimand) is EstimandKind.ATE else d.n0


def _check_k(d: Dataset, k: int, estimand) -> None:
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise InvalidArgument(f"k must be a positive integer, got {k!r}")
    limit = max_k(d, estimand)
    if k > limit:
        raise KTooLarge(f"k={k} exceeds the arm size limit {limit}", k=int(k), limit=limit)


def propensity_match(d: Dataset, nuisance: FittedNuisance, k: int, estimand) -> MatchResult:
    return knn_match(nuisance.e_hat, d.a, k, direction_for(estimand))


def _matches_for(d, nuisance, k, estimand, match: MatchResult | None) -> MatchResult:
    if match is None:
        return propensity_match(d, nuisance, k, estimand)
    if match.direction is not direction_for(estimand):
        raise IncompatibleEstimand("precomputed match has the wrong direction")
    return match if match.k == k else match.truncate(k)


def amw_value(d: Dataset, nuisance: FittedNuisance, k: int, estimand=EstimandKind.ATE,
              match: MatchResult | None = None) -> float:
    """AMW estimate; ``match`` may be a precomputed propensity match with k' >= k."""
    _check_k(d, k, estimand)
    m = _matches_for(d, nuisance, k, estimand, match)
    a = d.a.astype(float)
    r = nuisance.residual
    w = 1.0 + m.match_count / k
    reg = reg_value(d, nuisance, estimand)
    if EstimandKind(estimand) is EstimandKind.ATE:
        return float(reg + np.mean(a * w * r - (1 - a) * w * r))
    return float(reg + np.sum(a * r - (1 - a) * w * r) / d.n1)


def amw_estimate(d, nuisance, k: int, match: MatchResult | None = None) -> PointEstimate:
    return _pe(amw_value(d, nuisance, k, EstimandKind.ATE, match), EstimatorKind.AMW, EstimandKind.ATE, k, d)


def amw_att_estimate(d, nuisance, k: int, match: MatchResult | None = None) -> PointEstimate:
    return _pe(amw_value(d, nuisance, k, EstimandKind.ATT, match), EstimatorKind.AMW, EstimandKind.ATT, k, d)


def psm_value(d, nuisance, k: int, estimand, match: MatchResult | None = None) -> float:
    """Bias-corrected propensity score matching (regression of Y on e within arm)."""
    m = _matches_for(d, nuisance, k, estimand, match)
    return match_estimate_bias_corrected(d, m, nuisance, estimand, MatchVariable.PROPENSITY)


def match_x_value(d: Dataset, nuisance: FittedNuisance, spec: ModelSpec, k: int) -> float:
    """Bias-corrected matching on the standardized outcome-model covariates."""
    if not spec.outcome_columns:
        raise InvalidArgument("covariate matching needs at least one outcome column")
    m = knn_match_x(d.columns(spec.outcome_columns), d.a, k, direction_for(EstimandKind.ATE))
    return match_estimate_bias_corrected(d, m, nuisance, EstimandKind.ATE, MatchVariable.X)


def evaluate(d: Dataset, nuisance: FittedNuisance, spec: ModelSpec,
             items: Sequence[tuple[EstimatorKind, int | None]], estimand) -> list[float]:
    """Evaluate several estimators on one nuisance fit, sharing the propensity match.

    ``items`` holds (kind, k) pairs with k already fixed for matching kinds.
    """
    estimand = EstimandKind(estimand)
    ks = [k for kind, k in items if kind in (EstimatorKind.AMW, EstimatorKind.AMWF, EstimatorKind.PSM)]
    shared = None
    if ks:
        kmax = max(ks)
        _check_k(d, kmax, estimand)
        shared = propensity_match(d, nuisance, kmax, estimand)
    out = []
    for kind, k in items:
        kind = EstimatorKind(kind)
        if kind is EstimatorKind.REG:
            out.append(reg_value(d, nuisance, estimand))
        elif kind is EstimatorKind.IPW:
            out.append(ipw_estimate(d, nuisance, estimand).value)
        elif kind is EstimatorKind.AIPW:
            out.append(aipw_estimate(d, nuisance, estimand).value)
        elif kind in (EstimatorKind.AMW, EstimatorKind.AMWF):
            out.append(amw_value(d, nuisance, k, estimand, shared))
        elif kind is EstimatorKind.PSM:
            out.append(psm_value(d, nuisance, k, estimand, shared))
        elif kind is EstimatorKind.MATCH_X:
            if estimand is not EstimandKind.ATE:
                raise IncompatibleEstimand("covariate matching supports the ATE only")
            out.append(match_x_value(d, nuisance, spec, k))
        else:  # pragma: no cover - closed enum
            raise InvalidArgument(f"unknown estimator {kind}")
    return out


def resolve_k(kind: EstimatorKind, k) -> int | None:
    """Fixed k for a kind: None for non-matching, 1 by default for AMWF/PSM/MATCH_X."""
    kind = EstimatorKind(kind)
    if kind not in MATCHING_KINDS:
        return None
    if k is None:
        if kind is EstimatorKind.AMW:
            return "auto"
        return 1
    if k == "auto":
        if kind is not EstimatorKind.AMW:
            raise InvalidArgument(f"k='auto' is only available for AMW, not {kind.value}")
        return "auto"
    return int(k)


def estimate(d: Dataset, spec: ModelSpec, kind: EstimatorKind | str,
             estimand: EstimandKind | str = EstimandKind.ATE, k: int | str | None = None,
             opts: FitOptions = FitOptions(), *, seed: int = 0,
             candidates: Iterable[int] | None = None, boot_b: int = 100,
             n_splits: int = 25) -> PointEstimate:
    """Fit nuisance models, pick K if requested, and compute one estimate.

    ``k='auto'`` (the AMW default) selects K by cross-validation; the
    selection reports are available through :func:`amw.kselect.select_k`.
    """
    kind = EstimatorKind(kind)
    estimand = EstimandKind(estimand)
    if kind is EstimatorKind.MATCH_X and estimand is not EstimandKind.ATE:
        raise IncompatibleEstimand("covariate matching supports the ATE only")
    k_fixed = resolve_k(kind, k)
    if k_fixed == "auto":
        from .kselect import select_k

        k_fixed, _ = select_k(d, spec, candidates, boot_b=boot_b, n_splits=n_splits,
                              rng_seed=seed, estimand=estimand, opts=opts)
    nuisance = fit_nuisance(d, spec, opts)
    (value,) = evaluate(d, nuisance, spec, [(kind, k_fixed)], estimand)
    return _pe(value, kind, estimand, k_fixed, d)
