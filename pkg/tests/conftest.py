import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_connected_adjacency(rng, n, p=0.4):
    """Random weighted graph made connected by a random spanning path."""
    a = np.where(rng.random((n, n)) < p, rng.random((n, n)), 0.0)
    a = np.triu(a, 1)
    perm = rng.permutation(n)
    for u, v in zip(perm, perm[1:]):
        a[min(u, v), max(u, v)] = rng.uniform(0.1, 1.0)
    return a + a.T


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import REPORT
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(REPORT):
            terminalreporter.write_line(line)
