import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def spd_from(a, floor=0.1):
    """Exactly symmetric SPD matrix built as A A^T + floor I."""
    m = a @ a.T + floor * np.eye(a.shape[0])
    return 0.5 * (m + m.T)


square3 = arrays(np.float64, (3, 3), elements=st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False))
spd3 = square3.map(spd_from)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20240611))
