import numpy as np
import pytest
from hypothesis import settings

from luq.grid import Grid, gaussian_density

settings.register_profile("luq", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("luq")


@pytest.fixture(scope="session")
def line():
    return Grid.line(-10.0, 10.0, 2001)


@pytest.fixture(scope="session")
def std_normal(line):
    return gaussian_density(line, 0.0, 1.0)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
