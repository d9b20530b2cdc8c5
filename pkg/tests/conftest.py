import numpy as np
import pytest

from graphmlp.graph import Graph
from graphmlp.synthetic import citation_graph

# (criterion number, verdict line) pairs filled in by the acceptance suite
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def nprng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_graph() -> Graph:
    return citation_graph(n=240, num_classes=3, d=60, avg_degree=4.0, seed=3, splits=(10, 60, 100))


def random_graph(n: int, p: float, rng: np.random.Generator) -> Graph:
    """Erdos-Renyi graph on n nodes with 2 random features and no labels."""
    iu = np.triu_indices(n, 1)
    keep = rng.random(iu[0].size) < p
    edges = np.stack([iu[0][keep], iu[1][keep]], axis=1)
    return Graph(rng.normal(size=(n, 2)), np.full(n, -1), edges, 1)
