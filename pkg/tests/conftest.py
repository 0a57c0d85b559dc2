import sys

import numpy as np
import pytest

from hierlstm.config import preset
from hierlstm.scenegen import generate_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def overfit_cfg():
    return preset("overfit")


@pytest.fixture(scope="session")
def overfit_data(overfit_cfg):
    return generate_dataset(overfit_cfg.task_spec(), overfit_cfg.data.n_train, overfit_cfg.data.n_test)


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
