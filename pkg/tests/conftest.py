import numpy as np
import pytest

from ngf.models.graph import Graph
from ngf.services.graph_core import generate_er, generate_sbm, generate_small_world


@pytest.fixture
def path3() -> Graph:
    return Graph.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def k4() -> Graph:
    return Graph.from_edges(4, [(i, j) for i in range(4) for j in range(i + 1, 4)])


@pytest.fixture
def c8() -> Graph:
    return Graph.from_edges(8, [(i, (i + 1) % 8) for i in range(8)])


def random_graphs(count: int, max_n: int = 32, seed: int = 0):
    """Mixed ER / SBM / small-world graphs, connected or not."""
    rng = np.random.default_rng(seed)
    out = []
    for t in range(count):
        n = int(rng.integers(4, max_n + 1))
        family = t % 3
        if family == 0:
            out.append(generate_er(n, float(rng.uniform(0.05, 0.5)), int(rng.integers(1 << 31))))
        elif family == 1:
            c = int(rng.integers(1, 4))
            n = max(c, n - n % c)
            out.append(generate_sbm(n, c, 0.5, 0.05, int(rng.integers(1 << 31)))[0])
        else:
            k = 2 * int(rng.integers(1, max(2, (n - 1) // 2)))
            out.append(generate_small_world(n, k, 0.2, int(rng.integers(1 << 31))))
    return out


@pytest.fixture
def graph_sample():
    return random_graphs


