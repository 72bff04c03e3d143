import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from credit_debias.errors import LengthMismatch, SingleClass
from credit_debias.evaluation import (
    ModeDiscrimination,
    auc,
    auc_pairwise,
    declare,
    discrimination_report,
    group_auc,
    permutation_test,
    significance,
)


def test_auc_examples():
    assert auc([0.9, 0.1], [1, 0]) == 1.0
    assert auc([0.9, 0.1], [0, 1]) == 0.0
    assert auc([0.5] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    assert auc([0.2, 0.4, 0.6, 0.8], [0, 1, 0, 1]) == 0.75


def test_auc_errors():
    with pytest.raises(SingleClass):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(LengthMismatch):
        auc([0.1, 0.2], [1, 0, 0])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 300))
def test_auc_matches_pair_count(seed, n):
    rng = np.random.default_rng(seed)
    s = rng.integers(0, 10, n).astype(float)  # coarse scores force ties
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    assert abs(auc(s, y) - auc_pairwise(s, y)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_auc_invariant_to_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    s = rng.random(200)
    y = rng.integers(0, 2, 200)
    y[:2] = (0, 1)
    assert auc(np.exp(3 * s) - 7, y) == auc(s, y)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_auc_label_flip_complements(seed):
    rng = np.random.default_rng(seed)
    s = np.round(rng.random(150), 1)
    y = rng.integers(0, 2, 150)
    y[:2] = (0, 1)
    assert auc(s, y) + auc(s, 1 - y) == pytest.approx(1.0, abs=1e-12)


def test_group_auc():
    s = np.array([0.9, 0.1, 0.8, 0.7, 0.2, 0.3])
    y = np.array([1, 0, 1, 0, 1, 0])
    g = np.array(["a", "a", "a", "b", "b", "b"])
    assert group_auc(s, y, g, "a") == 1.0
    assert group_auc(s, y, g, "b") == 0.0
    with pytest.raises(SingleClass) as err:
        group_auc(s, np.array([1, 0, 1, 0, 0, 0]), g, "b")
    assert err.value.details["level"] == "b"


def test_significance_matches_hand_t():
    rng = np.random.default_rng(0)
    a = 0.75 + rng.normal(0, 0.01, 30)
    b = a - 0.01 + rng.normal(0, 0.01, 30)
    res = significance(a, b)
    d = a - b
    t = d.mean() / (d.std(ddof=1) / np.sqrt(len(d)))
    assert res.statistic == pytest.approx(t, rel=1e-12)
    assert res.p_value == pytest.approx(2 * stats.t.sf(abs(t), len(d) - 1), rel=1e-9)
    assert res.p_value < 0.05 and not res.degenerate


@pytest.mark.parametrize("shift", [0.0, 0.003, 0.01])
def test_significance_agrees_with_sign_flip_oracle(shift):
    rng = np.random.default_rng(1)
    b = rng.normal(0.7, 0.01, 30)
    a = b + shift + rng.normal(0, 0.01, 30)
    p_t = significance(a, b).p_value
    p_perm = permutation_test(a, b, resamples=50_000)
    assert abs(p_t - p_perm) < 0.02


def test_significance_degenerate():
    same = significance([0.7, 0.8, 0.9], [0.7, 0.8, 0.9])
    assert (same.p_value, same.degenerate, same.statistic) == (1.0, True, None)
    constant = significance([0.8, 0.9, 1.0], [0.7, 0.8, 0.9])
    assert constant.degenerate and constant.p_value == 0.0


def test_significance_length_checks():
    with pytest.raises(LengthMismatch):
        significance([0.1, 0.2], [0.1])
    with pytest.raises(LengthMismatch):
        significance([0.1], [0.2])


def test_identical_scores_declare_nothing():
    rng = np.random.default_rng(2)
    s = rng.random(500)
    y = rng.integers(0, 2, 500)
    g = np.where(rng.random(500) < 0.3, "1", "0")
    rep = discrimination_report({"x": s, "y": s.copy()}, y, g, "1", "0", 0.5)
    assert rep.less_discriminatory == ()


def test_threshold_one_approves_everyone():
    rng = np.random.default_rng(3)
    s = rng.random(300) * 0.999
    y = rng.integers(0, 2, 300)
    g = np.where(rng.random(300) < 0.3, "1", "0")
    rep = discrimination_report({"x": s, "y": s ** 2}, y, g, "1", "0", 1.0)
    for m in rep.modes:
        assert m.approval_rate == {"1": 1.0, "0": 1.0}
        assert m.adverse_impact_ratio == 1.0


def test_report_matches_hand_counts():
    g = np.array(["1"] * 4 + ["0"] * 4)
    y = np.array([1, 0, 1, 0, 1, 0, 1, 0])
    fair = np.array([0.6, 0.2, 0.6, 0.3, 0.7, 0.1, 0.6, 0.4])
    biased = np.array([0.9, 0.8, 0.9, 0.3, 0.7, 0.1, 0.6, 0.4])
    rep = discrimination_report({"fair": fair, "biased": biased}, y, g, "1", "0", 0.5)
    by = {m.mode: m for m in rep.modes}
    # protected approvals: fair 2/4, biased 1/4; reference approvals 2/4 in both
    assert by["fair"].approval_rate == {"1": 0.5, "0": 0.5}
    assert by["biased"].adverse_impact_ratio == 0.5
    assert by["fair"].overall_auc == auc_pairwise(fair, y)
    assert rep.less_discriminatory == (("fair", "biased"),)
    assert rep.to_dict()["less_discriminatory"] == [{"mode": "fair", "than": "biased"}]


def test_declaration_needs_no_auc_loss():
    a = ModeDiscrimination("a", {}, 0.95, 0.70, {}, None)
    b = ModeDiscrimination("b", {}, 0.80, 0.75, {}, None)
    c = ModeDiscrimination("c", {}, 0.85, 0.70, {}, None)
    assert declare([a, b, c]) == (("a", "c"),)


def test_missing_group_gives_undefined_ratio():
    s = np.array([0.1, 0.9, 0.2, 0.8])
    y = np.array([0, 1, 0, 1])
    g = np.array(["0"] * 4)
    rep = discrimination_report({"x": s, "y": s}, y, g, "1", "0", 0.5)
    assert rep.modes[0].approval_rate["1"] is None
    assert rep.modes[0].adverse_impact_ratio is None
