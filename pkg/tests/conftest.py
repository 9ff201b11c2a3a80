import numpy as np
import pytest

from predalloc.linkmodel import LinkParams
from predalloc.planner.problem import RadioLimits


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def limits():
    return RadioLimits()


@pytest.fixture
def link():
    """A link whose normalised SNR equals the per-subcarrier power in watts times 1e3."""
    return LinkParams(alpha=1e3, noise_power=1.0, bandwidth=15e3, phi=1.0)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
