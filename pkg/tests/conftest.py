import numpy as np
import pytest


def diag(m, n, values):
    D = np.zeros((m, n))
    for i, v in enumerate(values):
        D[i, i] = v
    return D


def elementary(m, n, p, q):
    E = np.zeros((m, n))
    E[p - 1, q - 1] = 1.0
    return E


def rel_close(a, b, scale, tol=1e-12):
    return abs(a - b) <= tol * max(scale, 1e-300)


@pytest.fixture
def rng():
    return np.random.default_rng(20061)


@pytest.fixture
def A43():
    """Diag(3, 2, 1) as a 4 x 3 matrix."""
    return diag(4, 3, [3.0, 2.0, 1.0])


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
