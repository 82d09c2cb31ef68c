"""Augmented match weighted (AMW) estimators of average treatment effects.

Typical use::

    from amw import load_csv, ModelSpec, run_estimate

    d = load_csv("data.csv", "y", "a", ["x1", "x2"])
    report = run_estimate(d, ModelSpec.same(["x1", "x2"]), "amw", "ate", k="auto", seed=1)
"""

from __future__ import annotations

__version__ = "0.1.0"

from ._backend import BACKEND
from .balance import BalanceTable, balance_table, std_diff
from .bootstrap import BootstrapResult, EstimateReport, bootstrap, bootstrap_panel, coverage, run_estimate
from .data import Dataset, EstimandKind, EstimatorKind, ModelSpec, load_csv, standardize_columns
from .errors import ERROR_CODES, AmwError
from .estimators import (
    PointEstimate,
    aipw_estimate,
    amw_att_estimate,
    amw_estimate,
    estimate,
    ipw_estimate,
    reg_estimate,
)
from .kselect import BTerm, KCandidateReport, compute_b_term, cv_bias, select_k
from .matching import MatchDirection, MatchResult, MatchVariable, knn_match, knn_match_x
from .nuisance import FitOptions, FittedNuisance, fit_linear, fit_logistic, fit_nuisance
from .simulation import DgpConfig, KProfile, Scenario, ScenarioSummary, generate_dataset, k_profile, run_scenario

__all__ = [
    "BACKEND",
    "AmwError",
    "BTerm",
    "BalanceTable",
    "BootstrapResult",
    "Dataset",
    "DgpConfig",
    "ERROR_CODES",
    "EstimandKind",
    "EstimateReport",
    "EstimatorKind",
    "FitOptions",
    "FittedNuisance",
    "KCandidateReport",
    "KProfile",
    "MatchDirection",
    "MatchResult",
    "MatchVariable",
    "ModelSpec",
    "PointEstimate",
    "Scenario",
    "ScenarioSummary",
    "aipw_estimate",
    "amw_att_estimate",
    "amw_estimate",
    "balance_table",
    "bootstrap",
    "bootstrap_panel",
    "compute_b_term",
    "coverage",
    "cv_bias",
    "estimate",
    "fit_linear",
    "fit_logistic",
    "fit_nuisance",
    "generate_dataset",
    "ipw_estimate",
    "k_profile",
    "knn_match",
    "knn_match_x",
    "load_csv",
    "reg_estimate",
    "run_estimate",
    "run_scenario",
    "select_k",
    "standardize_columns",
    "std_diff",
]
