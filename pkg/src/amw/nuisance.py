"""Propensity and outcome model fitting.

The propensity score is a logistic regression solved by Newton/IRLS; each
arm's outcome model is either ordinary least squares or a logistic
regression (binary outcomes), fit on that arm only and then predicted for
every unit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, ModelSpec
from .errors import (
    AmwError,
    ArmTooSmall,
    InvalidArgument,
    MaxIterExceeded,
    NuisanceFitError,
    Separation,
    SingleClass,
    SingularDesign,
)

SEPARATION_ETA = 30.0


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 100
    tol: float = 1e-8
    ridge: float = 0.0
    clip: float | None = None  # diagnostics only; estimators never clip by default

    def __post_init__(self) -> None:
        if self.max_iter < 1:
            raise InvalidArgument("max_iter must be >= 1")
        if not self.tol > 0:
            raise InvalidArgument("tol must be > 0")
        if self.ridge < 0:
            raise InvalidArgument("ridge must be >= 0")
        if self.clip is not None and not 0 < self.clip < 0.5:
            raise InvalidArgument("clip must lie in (0, 0.5)")


@dataclass(frozen=True)
class LogisticFit:
    coef: np.ndarray
    prob: np.ndarray
    n_iter: int
    converged: bool


@dataclass(frozen=True)
class LinearFit:
    coef: np.ndarray
    fitted: np.ndarray


def sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta, dtype=float)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _check_rank(x: np.ndarray, ridge: float) -> None:
    if x.shape[0] < x.shape[1] and ridge == 0:
        raise SingularDesign(f"design has {x.shape[0]} rows but {x.shape[1]} columns")
    if ridge == 0 and np.linalg.matrix_rank(x) < x.shape[1]:
        raise SingularDesign("design matrix is rank deficient")


def fit_logistic(x: np.ndarray, t: np.ndarray, opts: FitOptions = FitOptions()) -> LogisticFit:
    """Logistic MLE by iteratively reweighted least squares.

    Converges when the Newton step falls below ``opts.tol`` relative to the
    coefficient scale; the score is then zero to rounding.  Raises
    :class:`Separation` when the linear predictor runs past +-30 before
    converging.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float).reshape(-1)
    if not (np.any(t == 1) and np.any(t == 0)):
        raise SingleClass("logistic response has a single class")
    if not np.all((t == 0) | (t == 1)):
        raise InvalidArgument("logistic response must be 0/1")
    _check_rank(x, opts.ridge)

    p_dim = x.shape[1]
    beta = np.zeros(p_dim)
    ridge_eye = opts.ridge * np.eye(p_dim)
    eta = np.zeros(x.shape[0])
    for it in range(1, opts.max_iter + 1):
        prob = sigmoid(eta)
        grad = x.T @ (t - prob) - opts.ridge * beta
        w = prob * (1.0 - prob)
        hess = (x.T * w) @ x + ridge_eye
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise SingularDesign("singular information matrix in IRLS") from None
        beta = beta + step
        eta = x @ beta
        # steps stay O(1) on separated data, shrink quadratically otherwise
        converged = np.max(np.abs(step)) <= opts.tol * (1.0 + np.max(np.abs(beta)))
        if converged:
            return _logistic_result(beta, eta, it)
        if np.max(np.abs(eta)) > SEPARATION_ETA:
            raise Separation("linear predictor diverging; data appear separated", iteration=it)
    raise MaxIterExceeded(f"IRLS did not converge in {opts.max_iter} iterations", max_iter=opts.max_iter)


def _logistic_result(beta: np.ndarray, eta: np.ndarray, n_iter: int) -> LogisticFit:
    prob = sigmoid(eta)
    if np.any(prob <= 0.0) or np.any(prob >= 1.0):
        raise Separation("fitted probabilities reached 0 or 1")
    return LogisticFit(coef=beta, prob=prob, n_iter=n_iter, converged=True)


def fit_linear(x: np.ndarray, y: np.ndarray, opts: FitOptions = FitOptions()) -> LinearFit:
    """Least squares fit; with ``opts.ridge > 0`` solves the ridged normal equations."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if opts.ridge > 0:
        coef = np.linalg.solve(x.T @ x + opts.ridge * np.eye(x.shape[1]), x.T @ y)
    else:
        if x.shape[0] < x.shape[1]:
            raise SingularDesign(f"design has {x.shape[0]} rows but {x.shape[1]} columns")
        coef, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
        if rank < x.shape[1]:
            raise SingularDesign("design matrix is rank deficient")
    return LinearFit(coef=coef, fitted=x @ coef)


@dataclass(frozen=True, eq=False)
class FittedNuisance:
    """Per-unit propensity scores, arm-wise outcome predictions and residuals."""

    e_hat: np.ndarray
    u0_hat: np.ndarray
    u1_hat: np.ndarray
    residual: np.ndarray
    alpha: np.ndarray
    beta0: np.ndarray
    beta1: np.ndarray
    n_iter: dict[str, int]
    converged: dict[str, bool]

    @classmethod
    def from_arrays(cls, a: np.ndarray, y: np.ndarray, e_hat, u0_hat, u1_hat) -> "FittedNuisance":
        """Wrap externally supplied nuisance values (tests, oracle checks)."""
        a = np.asarray(a)
        y = np.asarray(y, dtype=float)
        n = a.shape[0]
        e_hat = np.broadcast_to(np.asarray(e_hat, dtype=float), (n,)).copy()
        u0_hat = np.broadcast_to(np.asarray(u0_hat, dtype=float), (n,)).copy()
        u1_hat = np.broadcast_to(np.asarray(u1_hat, dtype=float), (n,)).copy()
        residual = np.where(a == 1, y - u1_hat, y - u0_hat)
        empty = np.empty(0)
        return cls(e_hat, u0_hat, u1_hat, residual, empty, empty, empty, {}, {})

    def clipped(self, bound: float) -> "FittedNuisance":
        e = np.clip(self.e_hat, bound, 1.0 - bound)
        return FittedNuisance(e, self.u0_hat, self.u1_hat, self.residual, self.alpha,
                              self.beta0, self.beta1, self.n_iter, self.converged)


def _fit_outcome_arm(x_arm, y_arm, x_all, family: str, opts: FitOptions):
    if family == "linear":
        fit = fit_linear(x_arm, y_arm, opts)
        return fit.coef, x_all @ fit.coef, 0
    fit = fit_logistic(x_arm, y_arm, opts)
    return fit.coef, sigmoid(x_all @ fit.coef), fit.n_iter


def fit_nuisance(d: Dataset, spec: ModelSpec, opts: FitOptions = FitOptions()) -> FittedNuisance:
    """Fit the propensity model on all units and each outcome model on its arm."""
    d.require_both_arms()
    spec.validate(d)
    need = spec.n_outcome_regressors + 1
    if d.n1 < need or d.n0 < need:
        raise ArmTooSmall(
            f"each arm needs at least {need} units for the outcome model (n1={d.n1}, n0={d.n0})",
            n1=d.n1, n0=d.n0,
        )

    xp = d.design(spec.propensity_columns, spec.propensity_intercept)
    try:
        ps = fit_logistic(xp, d.a, opts)
    except AmwError as exc:
        raise NuisanceFitError("propensity", exc) from exc
    e_hat = ps.prob
    if opts.clip is not None:
        e_hat = np.clip(e_hat, opts.clip, 1.0 - opts.clip)

    xo = d.design(spec.outcome_columns, spec.outcome_intercept)
    treated = d.a == 1
    try:
        beta0, u0, it0 = _fit_outcome_arm(xo[~treated], d.y[~treated], xo, spec.outcome_family, opts)
    except AmwError as exc:
        raise NuisanceFitError("outcome_control", exc) from exc
    try:
        beta1, u1, it1 = _fit_outcome_arm(xo[treated], d.y[treated], xo, spec.outcome_family, opts)
    except AmwError as exc:
        raise NuisanceFitError("outcome_treated", exc) from exc

    residual = np.where(treated, d.y - u1, d.y - u0)
    return FittedNuisance(
        e_hat=e_hat,
        u0_hat=u0,
        u1_hat=u1,
        residual=residual,
        alpha=ps.coef,
        beta0=beta0,
        beta1=beta1,
        n_iter={"propensity": ps.n_iter, "outcome_control": it0, "outcome_treated": it1},
        converged={"propensity": True, "outcome_control": True, "outcome_treated": True},
    )
