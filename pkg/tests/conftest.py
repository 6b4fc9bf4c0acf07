import pytest

from properpl.core import LabelSpace
from properpl.data import gaussian_scenario, make_synthetic

from acceptance_log import ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def space3():
    return LabelSpace(3)


@pytest.fixture
def small_synthetic():
    ds, post = make_synthetic(gaussian_scenario(3, 5, 2.0), 400, seed=11)
    return ds
