import pytest

from helpers import ACCEPTANCE_RESULTS, make_accounts, make_channels, make_monitor, make_registry


@pytest.fixture
def registry():
    return make_registry()


@pytest.fixture
def channels():
    return make_channels()


@pytest.fixture
def accounts():
    return make_accounts()


@pytest.fixture
def monitor():
    return make_monitor()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, note in ACCEPTANCE_RESULTS:
        line = f"[{'PASS' if passed else 'FAIL'}] {name}"
        if note:
            line += f"  ({note})"
        terminalreporter.write_line(line)
