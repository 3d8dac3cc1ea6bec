import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng, m):
    q, r = np.linalg.qr(rng.normal(size=(m, m)))
    return q * np.sign(np.diag(r))


# (criterion, passed, detail) rows collected by the acceptance tests
ACCEPTANCE = []


def record(num, name, passed, detail=""):
    line = f"[{num:>2}] {'PASS' if passed else 'FAIL'}  {name}  {detail}"
    ACCEPTANCE.append((num, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
