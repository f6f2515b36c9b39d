import numpy as np
import pytest

from cascade_adrc.scaling import ScaledSystem

NOMINAL = dict(Kp_bar=1.0, Kd_bar=2.0, K1_bar=3.0, K2_bar=3.0, K3_bar=1.0)


@pytest.fixture
def nominal():
    return ScaledSystem.from_gains(**NOMINAL)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line, print it, then assert it."""
    lines = request.config.stash.setdefault(_CRITERIA_KEY, [])

    def record(label, ok, detail=""):
        line = f"{label}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
