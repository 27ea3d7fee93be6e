import pytest

from explainkit.data import SimConfig, simulate_signal, split
from explainkit.model import GbmConfig, fit_gbm

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def small_sim():
    data = simulate_signal(SimConfig(3000, seed=7))
    return split(data, 0.5, seed=7)


@pytest.fixture(scope="session")
def small_model(small_sim):
    train, valid = small_sim
    return fit_gbm(train, valid, GbmConfig(max_rounds=40, max_depth=3, seed=7))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l[7:9])):
            terminalreporter.write_line(line)
