from __future__ import annotations

import numpy as np
import pytest

from amw.data import Dataset, EstimandKind, EstimatorKind
from amw.errors import DegeneratePropensity, IncompatibleEstimand, InvalidArgument, KTooLarge
from amw.estimators import (
    aipw_estimate,
    aipw_weighting_form,
    amw_att_estimate,
    amw_estimate,
    amw_value,
    estimate,
    evaluate,
    ipw_estimate,
    reg_estimate,
    resolve_k,
)
from amw.nuisance import FittedNuisance, fit_nuisance
from amw.simulation import DgpConfig, Scenario, generate_dataset

from conftest import make_linear_data


def _nuis(d, e=0.5, u0=0.0, u1=0.0):
    return FittedNuisance.from_arrays(d.a, d.y, e, u0, u1)


# ------------------------------------------------------------- hand examples


def test_reg_examples(two_unit):
    d = two_unit
    assert reg_estimate(d, _nuis(d, u0=[1, 2], u1=[1, 2]), "ate").value == 0
    for est in ("ate", "att"):
        assert reg_estimate(d, _nuis(d, u0=[1, 2], u1=[2, 3]), est).value == 1
    assert reg_estimate(d, _nuis(d, u0=[1, 1], u1=[2, 4]), "ate").value == 2.0
    assert reg_estimate(d, _nuis(d), "ate").k_used is None


def test_ipw_examples():
    d = Dataset([2.0, 1.0], [1, 0], [[0.0], [1.0]], ("x",))
    assert ipw_estimate(d, _nuis(d), "ate").value == pytest.approx(1.0, abs=1e-15)
    single = Dataset([1.0], [1], [[0.0]], ("x",))
    assert ipw_estimate(single, _nuis(single, e=0.01), "ate").value == pytest.approx(100.0, rel=1e-12)
    zero = Dataset([0.0, 0.0], [1, 0], [[0.0], [1.0]], ("x",))
    assert ipw_estimate(zero, _nuis(zero, e=[0.3, 0.6]), "ate").value == 0.0


def test_aipw_examples(two_unit):
    d = two_unit
    assert aipw_estimate(d, _nuis(d), "ate").value == 2.0
    # exact outcome model: any propensity gives the regression estimate
    exact = _nuis(d, e=[0.13, 0.71], u0=[0.5, 1.0], u1=[3.0, 2.5])
    assert aipw_estimate(d, exact, "ate").value == pytest.approx(reg_estimate(d, exact, "ate").value, abs=1e-15)


def test_amw_examples(two_unit):
    d = two_unit
    assert amw_estimate(d, _nuis(d), 1).value == 2.0
    assert amw_att_estimate(d, _nuis(d), 1).value == 1.0
    pe = amw_estimate(d, _nuis(d), 1)
    assert pe.k_used == 1 and pe.estimator is EstimatorKind.AMW and pe.n_used == 2


def test_zero_residual_collapse():
    rng = np.random.default_rng(0)
    n = 50
    a = np.tile([1, 0], n // 2)
    u0, u1 = rng.standard_normal(n), rng.standard_normal(n) + 2
    d = Dataset(np.where(a == 1, u1, u0), a, rng.random((n, 1)), ("x",))
    nuis = FittedNuisance.from_arrays(a, d.y, rng.uniform(0.1, 0.9, n), u0, u1)
    for est in ("ate", "att"):
        reg = reg_estimate(d, nuis, est).value
        assert aipw_estimate(d, nuis, est).value == pytest.approx(reg, abs=1e-12)
        for k in (1, 3, 10):
            assert amw_value(d, nuis, k, est) == pytest.approx(reg, abs=1e-12)


# ---------------------------------------------------------------- identities


def test_aipw_two_forms_and_att_weights():
    rng = np.random.default_rng(1)
    for _ in range(30):
        d, spec = make_linear_data(n=int(rng.integers(40, 200)), seed=int(rng.integers(1 << 30)))
        nuis = fit_nuisance(d, spec)
        assert aipw_estimate(d, nuis, "ate").value == pytest.approx(aipw_weighting_form(d, nuis), abs=1e-10)


def test_amw_att_matches_direct_formula():
    from amw.matching import knn_match

    d, spec = make_linear_data(n=150, seed=3)
    nuis = fit_nuisance(d, spec)
    a = d.a.astype(float)
    r = nuis.residual
    for k in (1, 2, 5):
        m = knn_match(nuis.e_hat, d.a, k, "treated_to_control")
        ref = (np.sum(a * (nuis.u1_hat - nuis.u0_hat)) + np.sum(a * r - (1 - a) * (1 + m.match_count / k) * r)) / d.n1
        assert amw_att_estimate(d, nuis, k).value == pytest.approx(ref, abs=1e-10)
        # control residuals sum to zero under OLS with an intercept, so 1 + M/K and M/K agree
        alt = (np.sum(a * (nuis.u1_hat - nuis.u0_hat)) + np.sum(a * r - (1 - a) * (m.match_count / k) * r)) / d.n1
        assert ref == pytest.approx(alt, abs=1e-10)


def test_translation_scale_and_effect_equivariance():
    d, spec = make_linear_data(n=300, seed=4)
    base = {kind: estimate(d, spec, kind, k=3 if kind in ("amw", "psm") else None).value
            for kind in ("reg", "ipw", "aipw", "amw", "psm")}
    shifted = d.with_outcome(d.y + 10.0)
    scaled = d.with_outcome(d.y * -2.5)
    effect = d.with_outcome(d.y + 0.7 * d.a)
    for kind, v in base.items():
        k = 3 if kind in ("amw", "psm") else None
        if kind != "ipw":
            assert estimate(shifted, spec, kind, k=k).value == pytest.approx(v, abs=1e-9)
            assert estimate(effect, spec, kind, k=k).value == pytest.approx(v + 0.7, abs=1e-9)
        assert estimate(scaled, spec, kind, k=k).value == pytest.approx(-2.5 * v, abs=1e-9)


def test_evaluate_shares_match():
    d, spec = make_linear_data(n=200, seed=5)
    nuis = fit_nuisance(d, spec)
    items = [(EstimatorKind.AMW, 1), (EstimatorKind.AMW, 8), (EstimatorKind.AMWF, 1), (EstimatorKind.PSM, 2),
             (EstimatorKind.AIPW, None), (EstimatorKind.MATCH_X, 1)]
    together = evaluate(d, nuis, spec, items, "ate")
    alone = [evaluate(d, nuis, spec, [it], "ate")[0] for it in items]
    np.testing.assert_array_equal(together, alone)
    assert together[0] == together[2]


# ----------------------------------------------------------------- contracts


def test_estimate_contracts():
    d, spec = make_linear_data(n=200, seed=6)
    amwf = estimate(d, spec, "amwf")
    amw1 = estimate(d, spec, "amw", k=1)
    assert amwf.value == amw1.value and amwf.k_used == 1
    reg = estimate(d, spec, "reg", k=5)
    assert reg.k_used is None
    with pytest.raises(InvalidArgument):
        estimate(d, spec, "amwf", k="auto")
    with pytest.raises(IncompatibleEstimand):
        estimate(d, spec, "match_x", "att")
    with pytest.raises(KTooLarge):
        estimate(d, spec, "amw", k=d.n)
    with pytest.raises(InvalidArgument):
        amw_value(d, fit_nuisance(d, spec), 0)


def test_estimate_auto_on_simulated_data():
    d, _ = generate_dataset(DgpConfig(seed=3))
    pe = estimate(d, Scenario.S11.spec(), "amw", k="auto", seed=1, boot_b=20, n_splits=5)
    assert pe.k_used >= 1 and np.isfinite(pe.value)


def test_degenerate_propensity(two_unit):
    d = two_unit
    with pytest.raises(DegeneratePropensity):
        ipw_estimate(d, _nuis(d, e=[1.0, 0.5]), "ate")
    with pytest.raises(DegeneratePropensity):
        aipw_estimate(d, _nuis(d, e=[0.5, 0.0]), "att")


def test_resolve_k():
    assert resolve_k(EstimatorKind.AMW, None) == "auto"
    assert resolve_k(EstimatorKind.PSM, None) == 1
    assert resolve_k(EstimatorKind.IPW, 4) is None
    assert resolve_k(EstimatorKind.AMW, "3") == 3


def test_point_estimate_k_contract():
    from amw.estimators import PointEstimate

    with pytest.raises(InvalidArgument):
        PointEstimate(1.0, EstimatorKind.REG, EstimandKind.ATE, 1, 10)
    with pytest.raises(InvalidArgument):
        PointEstimate(1.0, EstimatorKind.AMW, EstimandKind.ATE, None, 10)
