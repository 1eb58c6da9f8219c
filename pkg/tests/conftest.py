import numpy as np
import pytest

from dimexp.expansion import ExpansionConfig, expansion_path
from dimexp.simulate import ellipsoid_scenario
from dimexp.variogram import empirical_dispersion

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def ellipsoid():
    """100 sites on the (1, 1, 0.5) ellipsoid, 1000 replicates, observed on the disk."""
    X, hidden, Y = ellipsoid_scenario(100, 1000, seed=1)
    return X, hidden, Y, empirical_dispersion(Y)


@pytest.fixture(scope="session")
def ellipsoid_path(ellipsoid):
    X, _, _, disp = ellipsoid
    cfg = ExpansionConfig(p_max=3)
    return cfg, expansion_path(X, disp, cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def record():
    def _record(number, passed, detail):
        ACCEPTANCE[number] = (bool(passed), detail)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
