import numpy as np
import pytest

from multitrans import autograd as ag

# one line per acceptance criterion, echoed after the run summary
_acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def clean_tape():
    """Each test starts and ends with an empty autodiff tape."""
    ag.TAPE.clear()
    ag.TAPE.recording = True
    yield
    ag.TAPE.clear()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
