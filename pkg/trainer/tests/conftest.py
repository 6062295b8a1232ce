import numpy as np
import pytest

import tr_support
from ssbtrainer import TrainConfig, train_toy


@pytest.fixture
def rng():
    return np.random.default_rng(0xBEEF)


@pytest.fixture(scope="session")
def train_run():
    """One real 200-step training run on 8 crops, shared by everything that
    inspects a trained model."""
    crops = tr_support.smooth_crops(8, 32, seed=7)
    cfg = TrainConfig(beta=2048.0, learning_rate=1e-3, steps=200, crop_size=32,
                      seed=11, architecture=tr_support.toy_arch())
    return crops, cfg, train_toy(crops, cfg)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not tr_support.SECONDARY_VERDICTS:
        return
    terminalreporter.section("trainer acceptance")
    for name, ok in tr_support.SECONDARY_VERDICTS:
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}")
