import numpy as np
import pytest

from edgefield.graph import build_incidence, build_line_graph, from_edge_pairs

# the five-region example map: a 5-node graph with 7 borders
FIG_EDGES = [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (2, 4), (3, 4)]


@pytest.fixture(scope="session")
def fig_graph():
    return from_edge_pairs(FIG_EDGES)


@pytest.fixture(scope="session")
def fig_line_graph(fig_graph):
    return build_line_graph(fig_graph)


@pytest.fixture(scope="session")
def fig_C(fig_graph):
    return build_incidence(fig_graph).dense


@pytest.fixture(scope="session")
def path_graph():
    return from_edge_pairs([(0, 1), (1, 2)])


def random_connected_graph(rng, n_max=12):
    """Random connected simple graph: random spanning tree plus extra edges."""
    n = int(rng.integers(3, n_max + 1))
    order = rng.permutation(n)
    pairs = set()
    for i in range(1, n):
        u = int(order[i])
        v = int(order[rng.integers(0, i)])
        pairs.add((min(u, v), max(u, v)))
    n_extra = int(rng.integers(0, n))
    for _ in range(n_extra):
        u, v = rng.integers(0, n, size=2)
        if u != v:
            pairs.add((min(int(u), int(v)), max(int(u), int(v))))
    return from_edge_pairs(sorted(pairs), n=n)


def brute_force_line_adjacency(g):
    """Oracle: double loop over edge pairs testing shared endpoints."""
    p = g.p
    A = np.zeros((p, p))
    for i in range(p):
        for j in range(p):
            if i == j:
                continue
            shared = set(g.edges[i]) & set(g.edges[j])
            if len(shared) == 1:
                A[i, j] = 1.0
    return A
