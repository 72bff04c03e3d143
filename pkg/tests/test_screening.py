import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from credit_debias.dataset import Categorical, Column, ColumnRole, Dataset, Numeric, Schema
from credit_debias.errors import UnknownFeature, UnknownLevel
from credit_debias.screening import (
    Group,
    PositivityReport,
    ScreeningReport,
    correlation_with_group,
    mask_violations,
    overlap_test,
    screen_proxies,
)

RACE = Categorical(("White", "Black"))


def table(race, **features):
    cols = [Column("race", RACE, ColumnRole.PROTECTED)]
    values = {"race": np.asarray(race)}
    for name, (kind, vals) in features.items():
        role = ColumnRole.TRADITIONAL if name.startswith("trad") else ColumnRole.ALTERNATIVE
        cols.append(Column(name, kind, role))
        values[name] = np.asarray(vals)
    cols.append(Column("default", Numeric(), ColumnRole.TARGET))
    values["default"] = np.zeros(len(race))
    return Dataset(Schema(tuple(cols)), values)


BLACK = Group("race", "Black")


def test_identity_feature():
    race = [0, 1, 1, 0, 1]
    data = table(race, f=(Numeric(), np.array(race, float)))
    assert correlation_with_group(data, "f", BLACK).r == pytest.approx(1.0)


def test_constant_feature_is_undefined_and_kept():
    data = table([0, 1, 1, 0], f=(Numeric(), [3.0] * 4))
    assert correlation_with_group(data, "f", BLACK).r is None
    report = screen_proxies(data, BLACK, 0.05)
    assert report.dropped == ()


def test_hand_indicator_table():
    # group [1,1,0,0] vs feature [1,0,1,0]: covariance is zero by hand
    data = table([1, 1, 0, 0], f=(Numeric(), [1.0, 0.0, 1.0, 0.0]))
    assert correlation_with_group(data, "f", BLACK).r == pytest.approx(0.0, abs=1e-15)


def test_matches_numpy_with_pairwise_missing():
    rng = np.random.default_rng(0)
    race = rng.integers(0, 2, 300)
    x = rng.normal(size=300) + 0.3 * race
    x[rng.random(300) < 0.1] = np.nan
    race[rng.random(300) < 0.05] = -1
    data = table(race, f=(Numeric(), x))
    ok = ~np.isnan(x) & (race >= 0)
    expected = np.corrcoef((race[ok] == 1).astype(float), x[ok])[0, 1]
    assert correlation_with_group(data, "f", BLACK).r == pytest.approx(expected, abs=1e-12)


def test_categorical_reports_max_level():
    rng = np.random.default_rng(1)
    race = rng.integers(0, 2, 500)
    edu = np.where(race == 1, 1, rng.integers(0, 3, 500))  # level "b" tracks the group
    data = table(race, edu=(Categorical(("a", "b", "c")), edu))
    res = correlation_with_group(data, "edu", BLACK)
    assert res.level == "b"
    rs = [np.corrcoef((race == 1).astype(float), (edu == k).astype(float))[0, 1] for k in range(3)]
    assert abs(res.r) == pytest.approx(max(abs(r) for r in rs), abs=1e-12)


def test_unknown_feature_and_level():
    data = table([0, 1], f=(Numeric(), [0.0, 1.0]))
    with pytest.raises(UnknownFeature):
        correlation_with_group(data, "nope", BLACK)
    with pytest.raises(UnknownLevel):
        correlation_with_group(data, "f", Group("race", "Martian"))


def test_threshold_above_one_drops_nothing(scm_data):
    assert screen_proxies(scm_data, Group("A", "1"), 1.1).dropped == ()
    with pytest.raises(ValueError):
        screen_proxies(scm_data, Group("A", "1"), 0.0)


def test_default_model_drops_observations_keeps_decoy():
    from credit_debias.scm import ScmSpec, sample

    data = sample(ScmSpec(), 100_000, 4).data
    decoy = np.random.default_rng(9).normal(size=data.n_rows)
    data = data.with_column(Column("decoy", Numeric(), ColumnRole.ALTERNATIVE), decoy)
    report = screen_proxies(data, Group("A", "1"), 0.05)
    assert set(report.dropped) == {"X_Z1", "X_Z2"}
    r = {c.feature: c.r for c in report.correlations}
    assert abs(r["decoy"]) < 0.02
    # traditional measurements are never screened even though they correlate with A
    assert "X_W1" not in r


def test_report_json_round_trip(scm_data):
    report = screen_proxies(scm_data, Group("A", "1"), 0.05)
    again = ScreeningReport.from_dict(json.loads(report.to_json()))
    assert again == report
    assert "dropped 2 of 2" in report.table()


@settings(max_examples=40, deadline=None)
@given(scale=st.floats(0.01, 100), shift=st.floats(-1e3, 1e3), seed=st.integers(0, 1000))
def test_drop_set_affine_invariant(scale, shift, seed):
    rng = np.random.default_rng(seed)
    race = rng.integers(0, 2, 200)
    x = rng.normal(size=200) + 0.2 * race
    base = screen_proxies(table(race, f=(Numeric(), x)), BLACK, 0.05)
    moved = screen_proxies(table(race, f=(Numeric(), scale * x + shift)), BLACK, 0.05)
    assert base.dropped == moved.dropped
    assert base.correlations[0].r == pytest.approx(moved.correlations[0].r, abs=1e-9)


def test_row_order_invariance(scm_data):
    perm = np.random.default_rng(0).permutation(scm_data.n_rows)
    a = screen_proxies(scm_data, Group("A", "1"), 0.05)
    b = screen_proxies(scm_data.take(perm), Group("A", "1"), 0.05)
    assert a.dropped == b.dropped
    for x, y in zip(a.correlations, b.correlations):
        assert x.r == pytest.approx(y.r, abs=1e-12)


# -- positivity ------------------------------------------------------------

def hbcu_fixture():
    edu = Categorical(("HBCU", "State", "Private"))
    race = [1] * 500 + [0] * 1000 + [1] * 200
    school = [0] * 500 + [1] * 600 + [2] * 400 + [1] * 100 + [2] * 100
    return table(race, education=(edu, school))


def test_hbcu_violation():
    report = overlap_test(hbcu_fixture(), "race", 30)
    assert [(v.feature, v.value, v.group, v.count) for v in report.violations] == [
        ("education", "HBCU", "White", 0)]


def test_no_violation_when_every_cell_is_supported():
    rng = np.random.default_rng(2)
    race = rng.integers(0, 2, 4000)
    data = table(race, c=(Categorical(("x", "y")), rng.integers(0, 2, 4000)),
                 n=(Numeric(), rng.normal(size=4000)))
    assert overlap_test(data, "race", 30).violations == ()


def test_numeric_features_use_deciles():
    race = np.array([0] * 1000 + [1] * 1000)
    x = np.concatenate([np.linspace(0, 1, 1000), np.linspace(0.5, 2, 1000)])
    report = overlap_test(table(race, n=(Numeric(), x)), "race", 30)
    assert report.violations
    assert all(v.interval is not None and v.count < 30 for v in report.violations)


@settings(max_examples=30, deadline=None)
@given(lo=st.integers(1, 200), extra=st.integers(0, 300), seed=st.integers(0, 100))
def test_violations_monotone_in_floor(lo, extra, seed):
    rng = np.random.default_rng(seed)
    race = rng.integers(0, 2, 600)
    level = rng.choice(4, size=600, p=[0.7, 0.2, 0.08, 0.02])
    data = table(race, c=(Categorical(("a", "b", "c", "d")), level),
                 n=(Numeric(), rng.normal(size=600)))
    small = {(v.feature, v.value, v.group) for v in overlap_test(data, "race", lo).violations}
    big = overlap_test(data, "race", lo + extra)
    assert small <= {(v.feature, v.value, v.group) for v in big.violations}
    assert all(v.count < lo + extra for v in big.violations)


def test_masking_removes_remediated_values():
    data = hbcu_fixture()
    report = overlap_test(data, "race", 30)
    fixed = mask_violations(data, report)
    assert "HBCU" not in set(fixed.labels("education"))
    after = overlap_test(fixed, "race", 30)
    remediated = {(v.feature, v.value) for v in report.violations}
    assert not remediated & {(v.feature, v.value) for v in after.violations}


def test_numeric_masking_sets_missing():
    race = np.array([0] * 1000 + [1] * 1000)
    x = np.concatenate([np.linspace(0, 1, 1000), np.linspace(0.5, 2, 1000)])
    data = table(race, n=(Numeric(), x))
    report = overlap_test(data, "race", 30)
    fixed = mask_violations(data, report)
    assert fixed.missing("n").sum() > 0
    # values outside every violating interval are untouched
    keep = ~fixed.missing("n")
    np.testing.assert_array_equal(fixed.values("n")[keep], x[keep])


def test_positivity_json_round_trip():
    report = overlap_test(hbcu_fixture(), "race", 30)
    assert PositivityReport.from_dict(json.loads(report.to_json())) == report
