import sys

import numpy as np
import pytest

from tntrules.dataset import ExplanationDataset
from tntrules.gp import GaussianProcessRegressor
from tntrules.problems import SearchSpace


@pytest.fixture
def unit_square():
    return SearchSpace.from_bounds([[0.0, 1.0], [0.0, 1.0]], names=("a", "b"))


@pytest.fixture
def bowl_gp():
    """GP on 40 samples of a quadratic bowl centred at (0.3, 0.7)."""
    rng = np.random.default_rng(3)
    X = rng.uniform(0, 1, size=(40, 2))
    y = (X[:, 0] - 0.3) ** 2 + (X[:, 1] - 0.7) ** 2
    return GaussianProcessRegressor(random_state=0).fit(X, y)


@pytest.fixture
def bowl_dataset(unit_square):
    rng = np.random.default_rng(5)
    X = unit_square.sample_uniform(120, rng)
    mu = (X[:, 0] - 0.3) ** 2 + (X[:, 1] - 0.7) ** 2
    return ExplanationDataset(X, mu, np.full(120, 0.02), unit_square)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(module.RESULTS):
        terminalreporter.write_line(module.RESULTS[key])
