"""Random and hand-built MRF instances for tests, benchmarks and demos."""

from __future__ import annotations

import numpy as np

from dwmap.model import Graph
from dwmap.sideconstraints import InjectiveConstraint


def _tables(rng: np.random.Generator, cards, edges, low=-1.0, high=1.0) -> Graph:
    local = [rng.uniform(low, high, k) for k in cards]
    pair = [rng.uniform(low, high, (cards[s], cards[t])) for s, t in edges]
    return Graph(tuple(cards), tuple(edges), tuple(local), tuple(pair))


def random_tree(rng: np.random.Generator, n_nodes: int, min_states: int = 2, max_states: int = 4) -> Graph:
    """Uniform random labelled tree via a random parent for each node; random edge orientation."""
    cards = rng.integers(min_states, max_states + 1, n_nodes).tolist()
    order = rng.permutation(n_nodes)
    edges = []
    for pos in range(1, n_nodes):
        child = int(order[pos])
        parent = int(order[rng.integers(0, pos)])
        edges.append((parent, child) if rng.random() < 0.5 else (child, parent))
    return _tables(rng, cards, edges)


def random_loopy(
    rng: np.random.Generator, n_nodes: int, max_states: int = 3, edge_prob: float = 0.5
) -> Graph:
    """Connected graph with at least one cycle: a random tree plus extra edges."""
    cards = rng.integers(2, max_states + 1, n_nodes).tolist()
    tree = random_tree(rng, n_nodes)
    edges = list(tree.edges)
    present = {frozenset(e) for e in edges}
    candidates = [(s, t) for s in range(n_nodes) for t in range(s + 1, n_nodes) if frozenset((s, t)) not in present]
    rng.shuffle(candidates)
    extra = [e for e in candidates if rng.random() < edge_prob]
    if not extra and candidates:
        extra = [candidates[0]]
    edges.extend(tuple(map(int, e)) for e in extra)
    return _tables(rng, cards, edges)


def frustrated_triangle(reward: float = 1.0) -> Graph:
    """Two-state antiferromagnetic triangle: each edge rewards disagreement."""
    disagree = np.array([[0.0, reward], [reward, 0.0]])
    return Graph((2, 2, 2), ((0, 1), (1, 2), (0, 2)), (np.zeros(2),) * 3, (disagree,) * 3)


def bipartite_matching(
    rng: np.random.Generator, n_left: int, n_right: int, noise: float = 0.6
) -> tuple[Graph, list[InjectiveConstraint]]:
    """Chain of left points matched to right points, last state = outlier.

    Unary terms prefer a hidden injective matching but are noisy; pairwise
    terms along the chain reward neighbours that keep their relative offset.
    """
    outlier = n_right
    truth = rng.permutation(n_right)[:n_left] if n_left <= n_right else rng.integers(0, n_right, n_left)
    cards = [n_right + 1] * n_left
    local = []
    for i in range(n_left):
        phi = rng.normal(0.0, noise, n_right + 1)
        phi[truth[i]] += 1.5
        phi[outlier] = 0.3
        local.append(phi)
    edges = [(i, i + 1) for i in range(n_left - 1)]
    pair = []
    for s, t in edges:
        phi = np.zeros((n_right + 1, n_right + 1))
        shift = int(truth[t]) - int(truth[s])
        for a in range(n_right):
            b = a + shift
            if 0 <= b < n_right:
                phi[a, b] = 1.0
        pair.append(phi)
    g = Graph(tuple(cards), tuple(edges), tuple(local), tuple(pair))
    return g, [InjectiveConstraint(None, outlier)]
