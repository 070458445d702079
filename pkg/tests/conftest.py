import os

import pytest
from hypothesis import settings

from wgporo.bench import blocks_for
from wgporo.problems import ProblemParams

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

LAMBDAS = (1.4286, 1.6667e3, 1.6667e6)

# acceptance outcomes, filled by tests/test_acceptance.py and printed at the end
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def blocks2d():
    """``blocks2d(n, lam=1.4286, **params)`` with geometry cached per ``n``."""
    def make(n, lam=1.4286, **kw):
        return blocks_for(n, 2, ProblemParams.from_lambda(lam, **kw))
    return make


@pytest.fixture(scope="session")
def blocks3d():
    def make(n, lam=1.4286, **kw):
        return blocks_for(n, 3, ProblemParams.from_lambda(lam, dim=3, **kw))
    return make


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
