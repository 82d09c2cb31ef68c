"""Monte Carlo harness: data-generating process, scenarios and summaries.

Twelve latent variables ``Z_j = 1 + sqrt(3) (2u - 1)`` (mean 1, variance 1)
are pushed through fixed nonlinear transforms to give ``X``; after
standardization, treatment follows a logistic model in ``X`` and both
potential outcomes share the linear mean ``beta' X``, so the true effect is
zero.  A correctly specified model uses the ``X`` block, a misspecified one
the raw ``Z`` block.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from typing import Sequence

import numpy as np

from ._parallel import ordered_map
from ._rng import child_rng, derive_seed
from .bootstrap import BOOT_STREAM, SPLIT_STREAM, bootstrap_matrix, coverage, percentile_interval
from .data import Dataset, EstimandKind, EstimatorKind, ModelSpec, standardize_columns
from .errors import AmwError, InvalidArgument
from .estimators import evaluate, propensity_match
from .kselect import candidate_grid, compute_b_term, select_from_matrix
from .nuisance import FitOptions, fit_nuisance, sigmoid

N_LATENT = 12
SIGN_PATTERN = np.array([1, 1, 1, 1, -1, -1, -1, -1, 1, -1, 1, -1], dtype=float)
BETA = 0.2 * SIGN_PATTERN
Z_NAMES = tuple(f"Z{j}" for j in range(1, N_LATENT + 1))
X_NAMES = tuple(f"X{j}" for j in range(1, N_LATENT + 1))
SETTINGS = {"extreme": 1.0, "standard": 0.3}
MAX_ATTEMPTS = 3


@dataclass(frozen=True)
class DgpConfig:
    n: int = 1000
    c: float = 0.3
    beta: tuple[float, ...] = tuple(BETA)
    noise_sd0: float = 4.0
    noise_sd1: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 50:
            raise InvalidArgument(f"n must be >= 50, got {self.n}")
        if not self.c > 0:
            raise InvalidArgument(f"c must be positive, got {self.c}")
        if len(self.beta) != N_LATENT:
            raise InvalidArgument(f"beta needs {N_LATENT} entries")

    @classmethod
    def for_setting(cls, setting: str, **kw) -> "DgpConfig":
        if setting not in SETTINGS:
            raise InvalidArgument(f"setting must be one of {sorted(SETTINGS)}, got {setting!r}")
        return cls(c=SETTINGS[setting], **kw)

    @property
    def alpha(self) -> np.ndarray:
        return self.c * SIGN_PATTERN

    @property
    def setting(self) -> str:
        for name, c in SETTINGS.items():
            if math.isclose(self.c, c):
                return name
        return f"c={self.c:g}"


class Scenario(str, enum.Enum):
    """Two digits: propensity model correct?, outcome model correct?"""

    S00 = "00"
    S01 = "01"
    S10 = "10"
    S11 = "11"

    @property
    def propensity_correct(self) -> bool:
        return self.value[0] == "1"

    @property
    def outcome_correct(self) -> bool:
        return self.value[1] == "1"

    def spec(self) -> ModelSpec:
        return ModelSpec(
            X_NAMES if self.propensity_correct else Z_NAMES,
            X_NAMES if self.outcome_correct else Z_NAMES,
        )


def latent_draws(rng: np.random.Generator, n: int) -> np.ndarray:
    return 1.0 + math.sqrt(3.0) * (2.0 * rng.random((n, N_LATENT)) - 1.0)


def transform(z: np.ndarray) -> np.ndarray:
    """Unstandardized covariates X1..X12 from latent Z (n x 12)."""
    z = np.asarray(z, dtype=float)
    cols = [
        np.exp(z[:, 0]),
        np.exp(z[:, 1]),
        np.log((z[:, 2] + 1.0) ** 2),
        np.log((z[:, 3] + 1.0) ** 2),
        np.sin(z[:, 4] - z[:, 5]),
        np.cos(z[:, 4] + z[:, 5]),
        np.sin(z[:, 6]),
        np.cos(z[:, 6] - 1.0),
        (z[:, 7] > 0.4).astype(float),
        (z[:, 7] > -0.4).astype(float),
        (z[:, 8] > 0.3).astype(float),
        (z[:, 9] > -0.3).astype(float),
    ]
    return np.column_stack(cols)


def true_propensity(x_std: np.ndarray, c: float) -> np.ndarray:
    return sigmoid(np.asarray(x_std) @ (c * SIGN_PATTERN))


def generate_dataset(cfg: DgpConfig) -> tuple[Dataset, float]:
    """One simulated dataset with ``Z*`` and standardized ``X*`` columns.

    A draw that leaves an arm empty is discarded and redrawn from the next
    child stream; the number of discarded draws is never more than a handful
    at ``n >= 50``.
    """
    beta = np.asarray(cfg.beta, dtype=float)
    for attempt in range(100):
        rng = child_rng(cfg.seed, attempt)
        z = latent_draws(rng, cfg.n)
        x, _, _ = standardize_columns(transform(z))
        a = (rng.random(cfg.n) < sigmoid(x @ cfg.alpha)).astype(np.int8)
        if 0 < a.sum() < cfg.n:
            break
    else:  # pragma: no cover - probability ~ 0
        raise InvalidArgument("could not draw a dataset with both arms")
    mu = x @ beta
    y0 = mu + cfg.noise_sd0 * rng.standard_normal(cfg.n)
    y1 = mu + cfg.noise_sd1 * rng.standard_normal(cfg.n)
    y = np.where(a == 1, y1, y0)
    return Dataset(y, a, np.hstack([z, x]), Z_NAMES + X_NAMES), 0.0


# ---------------------------------------------------------------- Monte Carlo


@dataclass(frozen=True)
class ScenarioSummary:
    scenario: str
    setting: str
    estimator: str
    mean: float
    sd: float
    bootsd: float
    mse: float
    cr: float
    n_reps: int
    n_failed: int

    def to_dict(self) -> dict:
        return asdict(self)


SUMMARY_FIELDS = ("scenario", "setting", "estimator", "mean", "sd", "bootsd", "mse", "cr", "n_reps", "n_failed")


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    """Summaries plus the per-replicate values they were computed from.

    Per-replicate arrays have shape (n_reps, n_estimators); failed
    replicates are NaN rows.
    """

    summaries: tuple[ScenarioSummary, ...]
    labels: tuple[str, ...]
    estimates: np.ndarray
    se: np.ndarray
    ci: np.ndarray
    k_used: np.ndarray
    true_tau: float
    scenario: str
    setting: str
    failures: tuple[str, ...] = field(default=())

    def summary(self, label: str) -> ScenarioSummary:
        return self.summaries[self.labels.index(label)]


def _label(kind: EstimatorKind) -> str:
    return kind.name


def _items_for(estimators, k_policy, amwf_k: int):
    out = []
    for e in estimators:
        kind = EstimatorKind(e) if not isinstance(e, EstimatorKind) else e
        if kind is EstimatorKind.AMW:
            out.append((kind, k_policy if k_policy == "auto" else int(k_policy)))
        elif kind is EstimatorKind.AMWF:
            out.append((kind, int(amwf_k)))
        elif kind in (EstimatorKind.PSM, EstimatorKind.MATCH_X):
            out.append((kind, 1))
        else:
            out.append((kind, None))
    return out


def _one_replicate(rep: int, cfg: DgpConfig, scenario: Scenario, items, boot_b: int, alpha: float,
                   cv_boot_b: int, n_splits: int, candidates, seed: int, opts: FitOptions):
    spec = scenario.spec()
    m = len(items)
    last_error = ""
    for attempt in range(MAX_ATTEMPTS):
        rep_seed = derive_seed(seed, rep, attempt)
        d, tau = generate_dataset(replace(cfg, seed=rep_seed))
        try:
            return _fit_replicate(d, spec, items, boot_b, alpha, cv_boot_b, n_splits, candidates,
                                  rep_seed, opts) + (tau, "")
        except AmwError as exc:
            last_error = f"rep {rep} attempt {attempt}: {exc.code}: {exc}"
    nan = np.full(m, np.nan)
    return nan, nan, np.full((m, 2), np.nan), np.full(m, -1), 0.0, last_error


def _fit_replicate(d, spec, items, boot_b, alpha, cv_boot_b, n_splits, candidates, rep_seed, opts):
    ate = EstimandKind.ATE
    auto = any(k == "auto" for _, k in items)
    fixed = [(kind, k) for kind, k in items if k != "auto"]
    cands = candidate_grid(d, ate, candidates) if auto else []
    panel = [(EstimatorKind.AMW, c) for c in cands] + fixed
    b_total = max(boot_b, cv_boot_b if auto else 0)
    boot_seed = derive_seed(rep_seed, BOOT_STREAM)
    mat = bootstrap_matrix(d, spec, panel, ate, b_total, boot_seed, opts) if b_total else None

    k_star = None
    if auto:
        k_star, _ = select_from_matrix(d, spec, cands, mat[:cv_boot_b, : len(cands)], n_splits,
                                       derive_seed(rep_seed, SPLIT_STREAM), ate, opts)
    resolved = [(kind, k_star if k == "auto" else k) for kind, k in items]
    nuis = fit_nuisance(d, spec, opts)
    est = np.asarray(evaluate(d, nuis, spec, resolved, ate), dtype=float)

    m = len(items)
    se = np.full(m, np.nan)
    ci = np.full((m, 2), np.nan)
    if boot_b:
        for j, (kind, k) in enumerate(items):
            col = cands.index(k_star) if k == "auto" else len(cands) + fixed.index((kind, k))
            vals = mat[:boot_b, col]
            vals = vals[np.isfinite(vals)]
            if vals.size >= 2:
                se[j] = np.std(vals, ddof=1)
                ci[j] = percentile_interval(vals, alpha)
    kused = np.array([(-1 if k is None else int(k)) for _, k in resolved])
    return est, se, ci, kused


def summarize_replicates(values: np.ndarray, se: np.ndarray, ci: np.ndarray, truth: float):
    """(mean, sd, bootsd, mse, cr, n_ok) from per-replicate values of one estimator."""
    ok = np.isfinite(values)
    v = values[ok]
    n_ok = int(v.size)
    if n_ok == 0:
        return (math.nan,) * 5 + (0,)
    mean = float(np.mean(v))
    sd = float(np.std(v, ddof=1)) if n_ok >= 2 else math.nan
    mse = float(np.mean((v - truth) ** 2))
    se_ok = se[ok]
    bootsd = float(np.mean(se_ok)) if np.all(np.isfinite(se_ok)) else math.nan
    ci_ok = ci[ok]
    cr = coverage(ci_ok, truth) if np.all(np.isfinite(ci_ok)) else math.nan
    return mean, sd, bootsd, mse, cr, n_ok


def run_scenario(cfg: DgpConfig, scenario: Scenario | str, estimators: Sequence = ("AMW",),
                 n_reps: int = 100, boot_b: int = 100, k_policy: int | str = "auto", seed: int = 0,
                 *, alpha: float = 0.05, cv_boot_b: int = 100, n_splits: int = 25,
                 candidates: Sequence[int] | None = None, amwf_k: int = 1,
                 opts: FitOptions = FitOptions(), n_jobs: int = 1) -> ScenarioResult:
    """Monte Carlo study of several ATE estimators on one scenario.

    Replicate ``r`` generates data from a seed derived from ``(seed, r)``; a
    replicate whose fit fails is regenerated up to three times and then
    counted as failed.  ``boot_b=0`` skips the outer bootstrap, leaving
    ``bootsd`` and ``cr`` as NaN; AMW with ``k_policy='auto'`` still runs
    its CV bootstrap.
    """
    if n_reps < 2:
        raise InvalidArgument(f"n_reps must be >= 2, got {n_reps}")
    if boot_b == 1:
        raise InvalidArgument("boot_b must be 0 (skip) or >= 2")
    scenario = Scenario(scenario)
    items = _items_for(estimators, k_policy, amwf_k)
    fn = partial(_one_replicate, cfg=cfg, scenario=scenario, items=items, boot_b=boot_b, alpha=alpha,
                 cv_boot_b=cv_boot_b, n_splits=n_splits, candidates=candidates, seed=seed, opts=opts)
    rows = ordered_map(fn, range(n_reps), n_jobs)

    est = np.vstack([r[0] for r in rows])
    se = np.vstack([r[1] for r in rows])
    ci = np.stack([r[2] for r in rows])
    kused = np.vstack([r[3] for r in rows])
    taus = [r[4] for r in rows]
    failures = tuple(r[5] for r in rows if r[5])
    truth = float(taus[0])
    labels = tuple(_label(kind) for kind, _ in items)
    summaries = []
    for j, label in enumerate(labels):
        mean, sd, bootsd, mse, cr, n_ok = summarize_replicates(est[:, j], se[:, j], ci[:, j], truth)
        summaries.append(ScenarioSummary(scenario.value, cfg.setting, label, mean, sd, bootsd, mse, cr,
                                         n_ok, n_reps - n_ok))
    return ScenarioResult(tuple(summaries), labels, est, se, ci, kused, truth, scenario.value,
                          cfg.setting, failures)


# ------------------------------------------------------------- output helpers


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def summaries_csv(summaries: Sequence[ScenarioSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for s in summaries:
        w.writerow([_fmt(getattr(s, f)) for f in SUMMARY_FIELDS])
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def summaries_json(summaries: Sequence[ScenarioSummary]) -> str:
    rows = [{k: _json_safe(v) for k, v in s.to_dict().items()} for s in summaries]
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"


def replicates_csv(result: ScenarioResult) -> str:
    """Long-format per-replicate estimates (box-plot input)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("scenario", "setting", "replicate", "estimator", "estimate", "se", "ci_lower", "ci_upper", "k"))
    for r in range(result.estimates.shape[0]):
        for j, label in enumerate(result.labels):
            w.writerow((result.scenario, result.setting, r, label, _fmt(float(result.estimates[r, j])),
                        _fmt(float(result.se[r, j])), _fmt(float(result.ci[r, j, 0])),
                        _fmt(float(result.ci[r, j, 1])), int(result.k_used[r, j])))
    return buf.getvalue()


# ------------------------------------------------------------------ K profile


@dataclass(frozen=True, eq=False)
class KProfile:
    k_grid: tuple[int, ...]
    var_b: np.ndarray
    bias_proxy: np.ndarray
    mean_b: np.ndarray
    n_reps: int
    n_failed: int

    def to_dict(self) -> dict:
        return {
            "k_grid": list(self.k_grid),
            "var_b": [float(v) for v in self.var_b],
            "bias_proxy": [float(v) for v in self.bias_proxy],
            "mean_b": [float(v) for v in self.mean_b],
            "n_reps": self.n_reps,
            "n_failed": self.n_failed,
        }


def _profile_replicate(rep: int, cfg: DgpConfig, scenario: Scenario, grid, seed: int, opts) -> np.ndarray:
    spec = scenario.spec()
    for attempt in range(MAX_ATTEMPTS):
        d, _ = generate_dataset(replace(cfg, seed=derive_seed(seed, rep, attempt)))
        try:
            nuis = fit_nuisance(d, spec, opts)
            match = propensity_match(d, nuis, max(grid), EstimandKind.ATE)
            return np.array([compute_b_term(d, nuis, k, EstimandKind.ATE, match).value for k in grid])
        except AmwError:
            continue
    return np.full(len(grid), np.nan)


def k_profile(cfg: DgpConfig, scenario: Scenario | str, k_grid: Sequence[int] = (1, 2, 4, 8, 16, 32),
              n_reps: int = 500, seed: int = 0, opts: FitOptions = FitOptions(),
              n_jobs: int = 1) -> KProfile:
    """Monte Carlo variance of B(K), and mean of B(K) minus mean of B(1), per K.

    K = 1 is always part of the grid since it anchors the bias proxy.
    """
    grid = tuple(sorted({1, *(int(k) for k in k_grid)}))
    if grid[0] < 1:
        raise InvalidArgument("k_grid must hold positive integers")
    scenario = Scenario(scenario)
    fn = partial(_profile_replicate, cfg=cfg, scenario=scenario, grid=grid, seed=seed, opts=opts)
    b = np.vstack(ordered_map(fn, range(n_reps), n_jobs))
    ok = np.all(np.isfinite(b), axis=1)
    b = b[ok]
    mean_b = b.mean(axis=0)
    return KProfile(grid, b.var(axis=0, ddof=1), mean_b - mean_b[0], mean_b, int(ok.sum()),
                    int(n_reps - ok.sum()))
