from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amw.data import Dataset
from amw.errors import EmptyOppositeArm, IncompatibleEstimand, InvalidArgument, NonFiniteValue
from amw.matching import (
    MatchDirection,
    MatchVariable,
    impute_bias_corrected,
    impute_simple,
    knn_match,
    knn_match_x,
    linear_form,
    match_estimate_bias_corrected,
    match_estimate_simple,
    match_estimate_weighted,
)
from amw.nuisance import FittedNuisance

from oracles import brute_knn, random_instance


def _check_against_oracle(scores, a, k, kernel, both=True):
    direction = MatchDirection.BOTH if both else MatchDirection.TREATED_TO_CONTROL
    m = knn_match(scores, a, k, direction, kernel=kernel)
    sets, counts = brute_knn(scores, a, k, both)
    assert list(m.units) == sorted(sets)
    for i, nb in sets.items():
        assert m.neighbor_set(i) == nb
    np.testing.assert_array_equal(m.match_count, counts)


def test_hand_example_each_matched_once(kernel):
    # treated at 0.2, 0.8; controls at 0.3, 0.7
    m = knn_match([0.2, 0.3, 0.7, 0.8], [1, 0, 0, 1], 1, kernel=kernel)
    np.testing.assert_array_equal(m.match_count, [1, 1, 1, 1])
    assert m.neighbor_set(0) == [1] and m.neighbor_set(3) == [2]


def test_tie_goes_to_lowest_index(kernel):
    m = knn_match([0.5, 0.4, 0.9, 0.6], [1, 0, 1, 0], 1, MatchDirection.TREATED_TO_CONTROL, kernel=kernel)
    assert m.neighbor_set(0) == [1]
    # mirror image: equal distances on both sides, lower index still wins
    m = knn_match([0.5, 0.6, 0.9, 0.4], [1, 0, 1, 0], 1, MatchDirection.TREATED_TO_CONTROL, kernel=kernel)
    assert m.neighbor_set(0) == [1]


def test_saturation(kernel):
    scores = [0.1, 0.5, 0.2, 0.9, 0.4]
    a = [1, 0, 1, 0, 0]
    m = knn_match(scores, a, 10, kernel=kernel)
    for i in range(5):
        opp = [j for j in range(5) if a[j] != a[i]]
        assert sorted(m.neighbor_set(i)) == opp
    np.testing.assert_array_equal(m.sizes, [3, 2, 3, 2, 2])
    np.testing.assert_array_equal(m.match_count, [3, 2, 3, 2, 2])


def test_oracle_random_instances(kernel):
    rng = np.random.default_rng(123)
    for _ in range(300):
        scores, a, k = random_instance(rng)
        _check_against_oracle(scores, a, k, kernel, both=True)
        _check_against_oracle(scores, a, k, kernel, both=False)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=25),
    st.integers(1, 8),
)
def test_oracle_property(rows, k):
    scores = np.array([s / 4 for s, _ in rows])
    a = np.array([int(t) for _, t in rows])
    if a.min() == a.max():
        a[0] = 1 - a[0]
    from amw._backend import KERNELS

    for kern in KERNELS.values():
        _check_against_oracle(scores, a, k, kern)


def test_kernels_agree_large():
    from amw._backend import KERNELS

    if len(KERNELS) < 2:
        pytest.skip("compiled kernel not built")
    rng = np.random.default_rng(9)
    scores = np.round(rng.random(5000), 3)
    a = (rng.random(5000) < 0.3).astype(int)
    ms = [knn_match(scores, a, 16, kernel=k) for k in KERNELS.values()]
    np.testing.assert_array_equal(ms[0].neighbors, ms[1].neighbors)
    np.testing.assert_array_equal(ms[0].distances, ms[1].distances)


def test_truncate_is_prefix(kernel):
    rng = np.random.default_rng(1)
    scores = np.round(rng.random(200), 2)
    a = (rng.random(200) < 0.4).astype(int)
    big = knn_match(scores, a, 16, kernel=kernel)
    for k in (1, 3, 8, 16):
        small = knn_match(scores, a, k, kernel=kernel)
        t = big.truncate(k)
        np.testing.assert_array_equal(t.neighbors, small.neighbors)
        np.testing.assert_array_equal(t.match_count, small.match_count)
        np.testing.assert_allclose(t.match_weight, small.match_weight)
    with pytest.raises(InvalidArgument):
        big.truncate(17)


def test_match_errors():
    with pytest.raises(InvalidArgument):
        knn_match([0.1, 0.2], [1, 0], 0)
    with pytest.raises(NonFiniteValue):
        knn_match([0.1, np.nan], [1, 0], 1)
    with pytest.raises(EmptyOppositeArm):
        knn_match([0.1, 0.2], [1, 1], 1)


def test_match_x_oracle():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(4, 20))
        x = rng.integers(0, 3, size=(n, 2)).astype(float)
        a = np.zeros(n, dtype=int)
        a[rng.choice(n, int(rng.integers(1, n)), replace=False)] = 1
        k = int(rng.integers(1, 4))
        if np.any(np.std(x, axis=0) == 0):
            continue
        m = knn_match_x(x, a, k)
        z = (x - x.mean(0)) / x.std(0, ddof=1)
        for i in range(n):
            cand = [j for j in range(n) if a[j] != a[i]]
            cand.sort(key=lambda j: (np.sqrt(np.sum((z[i] - z[j]) ** 2)), j))
            got = m.neighbor_set(i)
            # distances may differ in the last bit; compare as distance multisets
            ref_d = [np.linalg.norm(z[i] - z[j]) for j in cand[:k]]
            got_d = [np.linalg.norm(z[i] - z[j]) for j in got]
            np.testing.assert_allclose(sorted(got_d), sorted(ref_d), atol=1e-12)


def _two_unit():
    return Dataset([3.0, 1.0], [1, 0], [[0.0], [1.0]], ("x",))


def test_impute_single_and_mean():
    d = Dataset([5.0, 1.0], [1, 0], [[0.0], [1.0]], ("x",))
    imp = impute_simple(d, knn_match([0.1, 0.2], d.a, 1))
    assert imp.yhat0[0] == 1.0 and imp.yhat1[1] == 5.0
    d = Dataset([0.0, 2.0, 4.0], [1, 0, 0], np.zeros((3, 1)) + [[0], [1], [2]], ("x",))
    imp = impute_simple(d, knn_match([0.1, 0.2, 0.3], d.a, 2, MatchDirection.TREATED_TO_CONTROL))
    assert imp.yhat0[0] == 3.0
    assert np.isnan(imp.yhat1[1])


def test_two_unit_simple_estimators():
    d = _two_unit()
    m = knn_match([0.5, 0.5], d.a, 1)
    assert match_estimate_simple(d, m, "ate") == 2.0
    assert match_estimate_weighted(d, m, "ate") == 2.0
    mt = knn_match([0.5, 0.5], d.a, 1, MatchDirection.TREATED_TO_CONTROL)
    assert match_estimate_simple(d, mt, "att") == 2.0
    assert match_estimate_weighted(d, mt, "att") == 2.0
    with pytest.raises(IncompatibleEstimand):
        match_estimate_simple(d, mt, "ate")


def test_constant_outcome_gives_zero():
    rng = np.random.default_rng(3)
    a = (rng.random(30) < 0.5).astype(int)
    a[:2] = [0, 1]
    d = Dataset(np.full(30, 4.2), a, rng.random((30, 1)), ("x",))
    m = knn_match(rng.random(30), a, 3)
    assert match_estimate_simple(d, m, "ate") == pytest.approx(0, abs=1e-12)


def test_bias_corrected_two_unit_and_zero_residuals():
    d = _two_unit()
    nuis = FittedNuisance.from_arrays(d.a, d.y, 0.5, 0.0, 0.0)
    m = knn_match(nuis.e_hat, d.a, 1)
    assert match_estimate_bias_corrected(d, m, nuis, "ate") == 2.0

    rng = np.random.default_rng(4)
    n = 40
    a = np.tile([1, 0], n // 2)
    u0, u1 = rng.standard_normal(n), rng.standard_normal(n) + 1
    y = np.where(a == 1, u1, u0)
    d = Dataset(y, a, rng.random((n, 1)), ("x",))
    nuis = FittedNuisance.from_arrays(a, y, rng.uniform(0.2, 0.8, n), u0, u1)
    m = knn_match(nuis.e_hat, a, 3)
    assert match_estimate_bias_corrected(d, m, nuis, "ate") == pytest.approx(np.mean(u1 - u0), abs=1e-12)


def test_psm_constant_score_is_deterministic():
    rng = np.random.default_rng(5)
    n = 20
    a = np.tile([1, 0], n // 2)
    d = Dataset(rng.standard_normal(n), a, rng.random((n, 1)), ("x",))
    nuis = FittedNuisance.from_arrays(a, d.y, 0.5, 0.0, 0.0)
    m = knn_match(nuis.e_hat, a, 2)
    v1 = match_estimate_bias_corrected(d, m, nuis, "ate", MatchVariable.PROPENSITY)
    v2 = match_estimate_bias_corrected(d, knn_match(nuis.e_hat, a, 2), nuis, "ate", MatchVariable.PROPENSITY)
    assert np.isfinite(v1) and v1 == v2
    # constant score: every unit matched to the lowest-index opposite units
    assert m.neighbor_set(0) == [1, 3]


def test_bias_corrected_equals_linear_form():
    rng = np.random.default_rng(6)
    for _ in range(50):
        n = int(rng.integers(6, 60))
        a = (rng.random(n) < 0.5).astype(int)
        a[:2] = [0, 1]
        y = rng.standard_normal(n)
        u0, u1 = rng.standard_normal(n), rng.standard_normal(n)
        e = rng.uniform(0.05, 0.95, n)
        d = Dataset(y, a, rng.random((n, 1)), ("x",))
        nuis = FittedNuisance.from_arrays(a, y, e, u0, u1)
        k = int(rng.integers(1, min(a.sum(), n - a.sum()) + 1))
        for est, direction in (("ate", "both"), ("att", "treated_to_control")):
            m = knn_match(e, a, k, direction)
            lhs = match_estimate_bias_corrected(d, m, nuis, est)
            assert lhs == pytest.approx(linear_form(d, m, u0, u1, est), abs=1e-10)
            imp = impute_bias_corrected(d, m, u0, u1)
            assert np.all(np.isfinite(imp.yhat0[a == 1]))
