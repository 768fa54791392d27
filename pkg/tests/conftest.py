import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def random_orthonormal(rng, n, d):
    q, _ = np.linalg.qr(rng.standard_normal((n, d)))
    return q


def random_orthogonal(rng, d):
    """Haar-distributed orthogonal matrix."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def rotation2(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


ACCEPTANCE_LINES = []


def record_criterion(number, name, ok, detail, seconds=None):
    """Store and print one acceptance verdict line."""
    took = f" [{seconds:.1f}s]" if seconds is not None else ""
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {name} -- {detail}{took}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
