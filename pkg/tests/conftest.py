import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ppg2ecg.network import ModelParams, tiny_architecture
from ppg2ecg.waveform_prep import synthesize_dataset

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_data():
    return synthesize_dataset(n_subjects=10, cycles_per_subject=3, classes=5, seed=7, length=32)


@pytest.fixture
def tiny_model():
    return ModelParams.initialize(tiny_architecture(32), seed=3)


def pytest_terminal_summary(terminalreporter):
    from accept_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
