import warnings

import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")

# acceptance results collected by tests/test_acceptance.py
ACCEPTANCE = {}


def record(num: int, title: str, passed: bool, detail: str = ""):
    ACCEPTANCE[num] = (title, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[num]
        tr.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {title}  {detail}")


@pytest.fixture
def seed():
    return 20261015
