import warnings

import numpy as np
import pytest

from hilbert_ot import ConeSpec, DiscreteMeasure, ExponentialTail, truncated_gaussian


def t3_measure():
    return DiscreteMeasure(weights=[1 / 3] * 3, points=[[0.0], [1.0], [2.0]], base_point=[0.0])


def t3_cone():
    return ConeSpec(t3_measure(), ExponentialTail(1.0), ExponentialTail(1.0), 1.0, 1.0)


def gaussian_pair(sigma=0.75, radius=3.75, n=20):
    return truncated_gaussian(n, sigma, radius, seed=0), truncated_gaussian(n, sigma, radius, seed=1)


@pytest.fixture
def t3():
    return t3_cone()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_decay_warning():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="alpha does not appear to decay")
        yield


# frozen instance on which the full Sinkhorn step certifies with a nondegenerate kappa
FROZEN_EPS = 20.0
FROZEN_M = 2.208191160787404
FROZEN_KAPPA = 0.41085542477751497


def frozen_problem():
    """Return ``(problem, ladder)`` for the frozen certified instance."""
    from hilbert_ot.sinkhorn import EotProblem, cone_ladder
    from hilbert_ot.space import CostSpec

    mu, nu = gaussian_pair()
    prob = EotProblem.from_cost(mu, nu, CostSpec("power_distance", 1.0, 1.0), FROZEN_EPS)
    return prob, cone_ladder(1.0, 1.0, FROZEN_M, mu, nu)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
