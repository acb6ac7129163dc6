import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense_matrix(op):
    """Materialize a small linear operator column by column."""
    n_in = int(np.prod(op.in_shape))
    cols = []
    for k in range(n_in):
        e = np.zeros(n_in)
        e[k] = 1.0
        cols.append(np.ravel(op.apply(e.reshape(op.in_shape))))
    return np.stack(cols, axis=1)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
