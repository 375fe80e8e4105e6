import numpy as np
import pytest

from htcnn.synthetic import GeneratorConfig, generate_region


@pytest.fixture(scope="session")
def small_dataset():
    """12 postcodes, 4 clusters, 40 days: enough history for every model family."""
    return generate_region(GeneratorConfig(n_days=40, seed=1))


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_region(GeneratorConfig(n_postcodes=4, n_clusters=2, n_days=20, seed=2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance lines collected by test_acceptance.py and echoed after the run
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance():
    def record(number, passed, detail):
        ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  criterion {number}: {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
