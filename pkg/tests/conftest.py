import numpy as np
import pytest

from neumann_lab.graphs import WeightedGraph


def random_connected_graph(rng, n_max=60, with_killing=False):
    """Random connected weighted graph on 2..n_max vertices.

    Spanning tree plus extra edges; b in [0.1, 3], m in [0.5, 2],
    optional killing c in [0, 0.5] on some vertices.
    """
    n = int(rng.integers(2, n_max + 1))
    edges = {}
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges[(u, v)] = float(rng.uniform(0.1, 3.0))
    extra = int(rng.integers(0, max(1, n)))
    for _ in range(extra):
        u, v = sorted(rng.choice(n, size=2, replace=False).tolist())
        edges.setdefault((u, v), float(rng.uniform(0.1, 3.0)))
    measure = {v: float(rng.uniform(0.5, 2.0)) for v in range(n)}
    killing = {}
    if with_killing:
        for v in range(n):
            if rng.random() < 0.3:
                killing[v] = float(rng.uniform(0.0, 0.5))
    return WeightedGraph.from_data(edges, measure, killing, name=f"random-{n}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def path_graph(k, b=1, m=1, c=0):
    edges = {(i, i + 1): b for i in range(k - 1)}
    measure = {i: m for i in range(k)}
    killing = {i: c for i in range(k)} if c else None
    return WeightedGraph.from_data(edges, measure, killing, name=f"path-{k}")
