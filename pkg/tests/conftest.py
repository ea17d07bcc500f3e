import numpy as np
import pytest

from savings_hjb.model import ModelParams


@pytest.fixture
def base_params():
    return ModelParams(A=1.0, beta=0.5, gamma=0.5, eps=0.01, sigma=0.1, T=1.0)


@pytest.fixture
def lt_params():
    return ModelParams(A=1.0, beta=0.3, gamma=0.6, eps=0.01, sigma=0.1, T=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for the acceptance summary, then return the flag."""
    def record(label: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
        request.config.stash[_LINES].append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
