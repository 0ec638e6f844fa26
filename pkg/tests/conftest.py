import sys

import numpy as np
import pytest
from hypothesis import settings

from contentarcs.identity import generate_keypair

settings.register_profile("ci", deadline=None, max_examples=100)
settings.load_profile("ci")


def seeded_key(n: int):
    return generate_keypair(n.to_bytes(32, "big"))


@pytest.fixture
def alice():
    return seeded_key(1)


@pytest.fixture
def bob():
    return seeded_key(2)


@pytest.fixture
def carol():
    return seeded_key(3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
