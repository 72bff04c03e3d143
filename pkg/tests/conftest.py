import re

import numpy as np
import pytest

from credit_debias.dataset import Categorical, Column, ColumnRole, Dataset, Numeric, Schema
from credit_debias.scm import ScmSpec, discretize, sample

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_outcomes: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m or "test_acceptance" not in report.nodeid:
        return
    num, name = int(m.group(1)), m.group(2)
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        _outcomes[num] = (status, name.replace("_", " "))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_outcomes):
        status, name = _outcomes[num]
        terminalreporter.write_line(f"criterion {num}: {status}  {name}")


@pytest.fixture(scope="session")
def default_spec():
    return ScmSpec()


@pytest.fixture(scope="session")
def scm_data():
    """20k rows of the default continuous model."""
    return sample(ScmSpec(), 20_000, 11).data


@pytest.fixture(scope="session")
def small_discrete():
    """Discrete twin small enough for brute-force enumeration (512 states)."""
    spec = ScmSpec(
        z_given_a=((0.3, 0.7), (0.8, 0.2)),
        beta_z=(-0.5, 0.5),
        p_given_a=((0.7, 0.3), (0.2, 0.8)),
        xw_noise=(0.8,),
        xz_confusion=(((0.9, 0.1), (0.2, 0.8)),),
    )
    return discretize(spec, w_bins=4)


@pytest.fixture
def toy_schema():
    return Schema((
        Column("race", Categorical(("White", "Black")), ColumnRole.PROTECTED),
        Column("income", Numeric(), ColumnRole.TRADITIONAL),
        Column("zip", Categorical(("a", "b", "c")), ColumnRole.ALTERNATIVE),
        Column("default", Numeric(), ColumnRole.TARGET),
    ))


def make_toy(schema, n=400, seed=0):
    rng = np.random.default_rng(seed)
    race = rng.integers(0, 2, n)
    income = rng.normal(size=n) - 0.5 * race
    zipc = np.where(rng.random(n) < 0.7, race, rng.integers(0, 3, n))
    y = (rng.random(n) < 1 / (1 + np.exp(1 + 1.5 * income))).astype(float)
    return Dataset(schema, {"race": race, "income": income, "zip": zipc, "default": y})


@pytest.fixture
def toy_data(toy_schema):
    return make_toy(toy_schema)
