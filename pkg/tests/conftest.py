import numpy as np
import pytest
from hypothesis import settings

from plapsim.mesh_basis import Domain, build_basis

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def square():
    return Domain.unit_square()


@pytest.fixture(scope="session")
def basis6(square):
    return build_basis(square, 6, 2)


@pytest.fixture(scope="session")
def basis8(square):
    return build_basis(square, 8, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
