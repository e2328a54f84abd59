import numpy as np
import pytest

from swiptcap.constraints import EvenPolynomial

G_DEFAULT = EvenPolynomial((0.01, 0.01, 0.01))


@pytest.fixture
def g_default():
    return G_DEFAULT


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def report(request, capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def _report(number, ok, detail):
        line = f"ACCEPTANCE criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        request.config.stash.setdefault(ACCEPTANCE_KEY, []).append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
