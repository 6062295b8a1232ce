import numpy as np
import pytest

import support
from ssbcodec.transform import RuntimeModel
from ssbcodec.weights import init_weights


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0xC0FFEE)


@pytest.fixture(scope="session")
def tiny_model():
    cfg = support.tiny_config()
    weights = init_weights(cfg, seed=41)
    return cfg, weights, RuntimeModel(weights, cfg)


def pytest_terminal_summary(terminalreporter):
    if not support.ACCEPTANCE_VERDICTS:
        return
    terminalreporter.section("acceptance")
    for name, ok in support.ACCEPTANCE_VERDICTS:
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}")
