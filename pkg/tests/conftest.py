from importlib.resources import files

import pytest
from hypothesis import settings

from hdadse.cost import CostParams

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

FIXTURES = files("hdadse") / "fixtures"


def fixture_path(name):
    return str(FIXTURES / f"{name}.yaml")


@pytest.fixture
def params():
    return CostParams()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
