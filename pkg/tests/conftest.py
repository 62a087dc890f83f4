import numpy as np
import pytest

from ccsbeam import ScenarioConfig, generate_dataset

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture(scope="session")
def small_split():
    return generate_dataset(ScenarioConfig(seed=7), 600, 300)


@pytest.fixture(scope="session")
def prior_train():
    """20,000-channel default-scenario training split (shared by prior checks)."""
    train, _ = generate_dataset(ScenarioConfig(seed=2024), 20000, 1)
    return train


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
