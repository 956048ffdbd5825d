import numpy as np
import pytest

from interbank_mfg import MarketParams, validate_params

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


@pytest.fixture
def fig5_params():
    return validate_params(MarketParams(a=5.0, a0=2.5, F=0.5, G=0.5, q=1.0, q0=1.0))


@pytest.fixture
def report_criterion():
    def record(number, passed, detail=""):
        ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(str(k).rstrip("abcdefghs")), str(k))):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def assert_close_arrays(a, b, tol):
    assert np.max(np.abs(np.asarray(a) - np.asarray(b))) <= tol
