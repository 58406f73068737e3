import numpy as np
import pytest

from mpnle.gains import NleConfig
from mpnle.harness import synthetic_speech
from mpnle.stft import StftParams


@pytest.fixture(scope="session")
def config():
    return NleConfig()


@pytest.fixture(scope="session")
def weights(config):
    return config.subband_weights()


@pytest.fixture(scope="session")
def params():
    return StftParams()


@pytest.fixture(scope="session")
def speech():
    return synthetic_speech(duration=2.0, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
