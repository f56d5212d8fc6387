import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from drate import ScenarioSpec, gen_dataset, validate_dataset  # noqa: E402


@pytest.fixture(scope="session")
def homo_large():
    return gen_dataset(ScenarioSpec("large", "homo", seed=11))


@pytest.fixture(scope="session")
def hetero_large():
    return gen_dataset(ScenarioSpec("large", "hetero", seed=12))


@pytest.fixture
def toy_data():
    rng = np.random.default_rng(3)
    n = 200
    X = rng.standard_normal((n, 3))
    A = (rng.random(n) < 1 / (1 + np.exp(-X[:, 0]))).astype(float)
    Y = 1.0 + X @ np.array([1.0, -0.5, 0.25]) + 2.0 * A + rng.standard_normal(n)
    return validate_dataset(X, A, Y)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
