import numpy as np
import pytest

from dynvar.core import make_state_algebra, tracial


def random_matrix(rng, n):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def random_state(rng, n):
    a = random_matrix(rng, n)
    w = a @ a.conj().T + 0.1 * np.eye(n)
    return w / np.trace(w).real


STATES = {
    "tracial2": lambda: tracial(2),
    "diag2": lambda: make_state_algebra(2, np.diag([2 / 3, 1 / 3])),
    "tracial3": lambda: tracial(3),
    "diag3": lambda: make_state_algebra(3, np.diag([0.5, 0.25, 0.25])),
}


@pytest.fixture(params=sorted(STATES))
def sa(request):
    return STATES[request.param]()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one (criterion, passed, detail) entry per acceptance criterion, filled in by
# test_acceptance.py and echoed at the end of the run
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
