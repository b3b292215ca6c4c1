import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="Esegue anche i test lenti (simulazioni complete)")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: test lento, eseguito solo con --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="serve --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


@pytest.fixture
def output_dir(tmp_path):
    path = tmp_path / "results"
    path.mkdir()
    return str(path)
