import itertools
import json

import numpy as np
import pytest
from scipy import special, stats

from credit_debias.dataset import ColumnRole
from credit_debias.errors import InvalidSpec, NoHiddenColumns, NotDiscrete, StateSpaceTooLarge
from credit_debias.scm import (
    Query,
    ScmSample,
    ScmSpec,
    check_ci,
    conditional_posterior,
    confusion_matrix,
    discretize,
    exact_query,
    interventional_posterior,
    parse_query,
    sample,
)


def test_columns_and_roles(default_spec):
    smp = sample(default_spec, 100, 0)
    roles = {c.name: c.role for c in smp.data.schema.columns}
    assert roles == {
        "A": ColumnRole.PROTECTED, "X_Z1": ColumnRole.ALTERNATIVE, "X_Z2": ColumnRole.ALTERNATIVE,
        "X_W1": ColumnRole.TRADITIONAL, "X_W2": ColumnRole.TRADITIONAL,
        "X_W3": ColumnRole.TRADITIONAL, "P": ColumnRole.EXCLUDED, "Y": ColumnRole.TARGET,
    }
    # latent columns live only in the side table
    assert "W" in smp.hidden and "W" not in smp.data.schema


def test_deterministic_per_seed(default_spec):
    a, b = sample(default_spec, 70_000, 5), sample(default_spec, 70_000, 5)
    c = sample(default_spec, 70_000, 6)
    for name in a.data.schema.names:
        np.testing.assert_array_equal(a.data.values(name), b.data.values(name))
    assert not np.array_equal(a.data.values("X_W1"), c.data.values("X_W1"))


def test_protected_rate_within_three_standard_errors(default_spec):
    n = 200_000
    a = sample(default_spec, n, 1).data.values("A")
    se = np.sqrt(default_spec.a_prior * (1 - default_spec.a_prior) / n)
    assert abs(a.mean() - default_spec.a_prior) <= 3 * se


def test_zero_prior_gives_no_protected_rows():
    smp = sample(ScmSpec(a_prior=0.0), 2000, 0)
    assert not smp.data.values("A").any()


def test_degenerate_noise():
    spec = ScmSpec(sigma_w=0.0, xw_noise=(0.0, 0.0, 0.0), beta_a=0.0)
    smp = sample(spec, 100_000, 2)
    z = smp.hidden["Z"].astype(int)
    y = smp.data.target
    for level in range(4):
        rows = z == level
        xw = smp.data.values("X_W1")[rows]
        assert np.all(xw == xw[0])
        p = special.expit(spec.gamma0 - spec.gamma1 * spec.beta_z[level])
        se = np.sqrt(p * (1 - p) / rows.sum())
        assert abs(y[rows].mean() - p) <= 4 * se


def test_demographic_table_goodness_of_fit(default_spec):
    smp = sample(default_spec, 100_000, 3)
    a = smp.data.values("A")
    z = smp.hidden["Z"].astype(int)
    for level in (0, 1):
        counts = np.bincount(z[a == level], minlength=4)
        expected = np.asarray(default_spec.z_given_a[level]) * counts.sum()
        assert stats.chisquare(counts, expected).pvalue > 0.01


@pytest.mark.parametrize("change", [
    {"a_prior": 1.5},
    {"z_given_a": ((0.5, 0.6), (0.5, 0.5))},
    {"sigma_w": -1.0},
    {"gamma1": -0.1},
    {"xw_noise": (1.0, -2.0)},
])
def test_invalid_spec(change):
    with pytest.raises(InvalidSpec):
        sample(ScmSpec(**change), 10, 0)


def test_spec_json_round_trip(tmp_path, default_spec):
    path = tmp_path / "spec.json"
    default_spec.save(path)
    assert ScmSpec.load(path) == default_spec
    obj = json.loads(path.read_text())
    obj["direct_effect"] = 0.1
    with pytest.raises(InvalidSpec):
        ScmSpec.from_dict(obj)


def test_parse_query():
    q = parse_query("P(Y=1 | do(A=0), X_Z1=2, X_W1=3)")
    assert q == Query({"Y": 1}, {"X_Z1": 2, "X_W1": 3}, {"A": 0})
    assert parse_query("P(Y=1)") == Query({"Y": 1})
    with pytest.raises(ValueError):
        parse_query("Q(Y=1)")


# -- exact enumeration -------------------------------------------------------

def brute_force(model, target, given, do=None):
    """Enumerate every joint state with a plain Python product of factors."""
    do = do or {}
    names = [n for n, _ in model.variables()]
    cards = [c for _, c in model.variables()]
    factors = model.factors()
    num = den = 0.0
    for state in itertools.product(*[range(c) for c in cards]):
        assign = dict(zip(names, state))
        if any(assign[k] != v for k, v in {**given, **do}.items()):
            continue
        p = 1.0
        for child, scope, table in factors:
            if child in do:
                continue
            p *= table[tuple(assign[v] for v in scope)]
        den += p
        if all(assign[k] == v for k, v in target.items()):
            num += p
    return num / den


def test_small_model_state_count(small_discrete):
    assert small_discrete.n_states == 512


@pytest.mark.parametrize("given", [{}, {"X_Z1": 1}, {"X_Z1": 0, "X_W1": 2}, {"A": 1, "X_W1": 3}])
def test_conditional_matches_brute_force(small_discrete, given):
    expected = brute_force(small_discrete, {"Y": 1}, given)
    assert exact_query(small_discrete, Query({"Y": 1}, given)) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("a", [0, 1])
def test_interventional_matches_brute_force(small_discrete, a):
    given = {"X_Z1": 1, "X_W1": 0}
    expected = brute_force(small_discrete, {"Y": 1}, given, {"A": a})
    q = Query({"Y": 1}, given, {"A": a})
    assert exact_query(small_discrete, q) == pytest.approx(expected, abs=1e-14)


def test_interventional_normalizes(small_discrete):
    total = sum(exact_query(small_discrete, Query({"Y": y}, {"X_Z1": 0, "X_W1": 1}, {"A": 0}))
                for y in (0, 1))
    assert total == pytest.approx(1.0, abs=1e-14)


def test_no_direct_protected_effect_equalizes_groups():
    # A reaches Y only through Z and W; with error-free X_Z observations and
    # beta_a = 0, conditioning on (X_Z, X_W) blocks every path from A
    exact = (confusion_matrix(4, 1.0),) * 2
    model = discretize(ScmSpec(beta_a=0.0, xz_confusion=exact))
    post, mass = conditional_posterior(model)
    ok = (mass[0] > 0) & (mass[1] > 0)
    assert ok.sum() > 100
    np.testing.assert_allclose(post[0][ok], post[1][ok], rtol=0, atol=1e-12)


def test_noisy_demographic_observation_leaves_protected_path_open():
    post, mass = conditional_posterior(discretize(ScmSpec(beta_a=0.0)))
    ok = (mass[0] > 0) & (mass[1] > 0)
    assert np.max(np.abs(post[0] - post[1])[ok]) > 0.05


def test_discrete_sample_matches_exact_marginal(small_discrete):
    y = small_discrete.sample(100_000, 4).data.target
    p = exact_query(small_discrete, "P(Y=1)")
    assert abs(y.mean() - p) <= 4 * np.sqrt(p * (1 - p) / len(y))


def test_posterior_tables_agree(small_discrete):
    for a in (0, 1):
        do_form = interventional_posterior(small_discrete, a)
        cond, mass = conditional_posterior(small_discrete)
        ok = mass[a] > 0
        np.testing.assert_allclose(do_form[ok], cond[a][ok], rtol=0, atol=1e-12)


def test_not_discrete(default_spec):
    with pytest.raises(NotDiscrete):
        exact_query(default_spec, "P(Y=1)")
    with pytest.raises(NotDiscrete):
        exact_query(discretize(default_spec, w_bins=20), "P(Y=1)")


def test_state_space_too_large():
    model = discretize(ScmSpec(xw_noise=(1.0,) * 6))
    with pytest.raises(StateSpaceTooLarge):
        exact_query(model, "P(Y=1)")


def test_discretize_needs_noise():
    with pytest.raises(InvalidSpec):
        discretize(ScmSpec(sigma_w=0.0))


# -- conditional independence check -----------------------------------------

def test_check_ci_requires_hidden(default_spec):
    smp = sample(default_spec, 100, 0)
    with pytest.raises(NoHiddenColumns):
        check_ci(ScmSample(smp.data, None))


def test_check_ci_no_qualifying_bins(default_spec):
    assert check_ci(sample(default_spec, 300, 0), bins=4) is None
