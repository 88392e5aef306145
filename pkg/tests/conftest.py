import numpy as np
import pytest

_ACCEPTANCE_LINES = []


def record_criterion(number, passed, text):
    """Collect one pass/fail line per acceptance criterion for the summary."""
    _ACCEPTANCE_LINES.append((number, passed, text))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, text in sorted(_ACCEPTANCE_LINES):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {status} — {text}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
