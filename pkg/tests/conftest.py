import numpy as np
import pytest
from hypothesis import settings

from pixelce import antenna

settings.register_profile("pixelce", deadline=None, max_examples=60)
settings.load_profile("pixelce")

# acceptance results, filled by test_acceptance and echoed in the terminal summary
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_net():
    return antenna.synth_network(8, 6, seed=3, pattern_rank=6)


@pytest.fixture(scope="session")
def full_net():
    return antenna.synth_network(39, 72, seed=1, pattern_rank=9)
