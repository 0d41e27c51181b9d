import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lqmfg import MFGProblem, TimeGrid, solve_riccati_p

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

Q2 = dict(q=1.0, qbar=1.0, S=-1.0, qT=0.0, qbarT=1.0, ST=-1.0)


def q2_problem(T=1.0, **kw):
    """A=0, B=R=1, Q+Qbar=2, QT+QbarT=1, Qbar S = Qbar_T S_T = -1."""
    return MFGProblem.scalar(T=T, **{**Q2, **kw})


def equilibrium_problem(**kw):
    """P = 1, r = 0, z = e^{-t}."""
    return MFGProblem.scalar(**kw)


@pytest.fixture(scope="session")
def q2():
    p = q2_problem()
    return p, solve_riccati_p(p, TimeGrid(1.0, 1000))


@pytest.fixture(scope="session")
def q2_short():
    p = q2_problem(T=0.1)
    return p, solve_riccati_p(p, TimeGrid(0.1, 1000))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    from test_acceptance import RESULTS_KEY

    lines = config.stash.get(RESULTS_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
