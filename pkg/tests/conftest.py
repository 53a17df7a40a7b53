import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from oobai import BanditInstance, Bernoulli, Gaussian

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


def random_instance(rng: np.random.Generator, K: int, family: str, min_gap: float = 0.05) -> BanditInstance:
    while True:
        if family == "gaussian":
            means = rng.uniform(-1.0, 1.0, K)
        else:
            means = rng.uniform(0.05, 0.95, K)
        top = np.sort(means)[::-1]
        if top[0] - top[1] >= min_gap:
            fam = Gaussian() if family == "gaussian" else Bernoulli()
            return BanditInstance(fam, tuple(means))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running Monte Carlo checks")
    config.addinivalue_line("markers", "acceptance: exit criteria")


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one verdict line per acceptance criterion; printed in the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
