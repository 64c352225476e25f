from pathlib import Path

import pytest

from probrec import build_hierarchy

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def minimal():
    return build_hierarchy([[1, 1]], ["U", "B1", "B2"])


@pytest.fixture
def sectors():
    return build_hierarchy([[1, 1, 1, 1, 1]], ["ALL", "FIN", "ICT", "MFG", "ENG", "TRD"])


@pytest.fixture
def configs():
    return CONFIGS


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
