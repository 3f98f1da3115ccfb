"""Independent reference computations used only by the tests.

Nothing here imports the solver modules under test: values are recomputed
from the raw potential tables with plain loops or scipy's HiGHS.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog


def score(cards, edges, local, pairwise, x) -> float:
    total = 0.0
    for s in range(len(cards)):
        total += float(local[s][x[s]])
    for (s, t), phi in zip(edges, pairwise):
        total += float(phi[x[s], x[t]])
    return total


def injective_ok(x, nodes, outlier) -> bool:
    used = [x[s] for s in nodes if x[s] != outlier]
    return len(used) == len(set(used))


def enumerate_map(g, accept=None):
    """Best (assignment, value) over the full product space, first maximizer wins."""
    best_x, best_v = None, -np.inf
    for x in itertools.product(*[range(k) for k in g.cardinalities]):
        if accept is not None and not accept(x):
            continue
        v = score(g.cardinalities, g.edges, g.local_potentials, g.pairwise_potentials, x)
        if v > best_v + 1e-12:
            best_x, best_v = list(x), v
    return best_x, best_v


def enumerate_restricted(g, surviving, accept=None) -> float:
    best = -np.inf
    for x in itertools.product(*surviving):
        if accept is not None and not accept(x):
            continue
        best = max(best, score(g.cardinalities, g.edges, g.local_potentials, g.pairwise_potentials, x))
    return best


def local_polytope_lp(g, injective_outlier=None, injective=False) -> float:
    """Optimum of the node+edge marginal LP over the local polytope.

    Variables are mu_s (per node) followed by mu_st (per edge, row-major).
    """
    cards = list(g.cardinalities)
    node_off = np.concatenate([[0], np.cumsum(cards)])
    n_node = int(node_off[-1])
    sizes = [cards[s] * cards[t] for s, t in g.edges]
    edge_off = n_node + np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    nv = int(edge_off[-1])
    c = np.zeros(nv)
    for s in range(len(cards)):
        c[node_off[s]:node_off[s + 1]] = g.local_potentials[s]
    for e, phi in enumerate(g.pairwise_potentials):
        c[edge_off[e]:edge_off[e + 1]] = np.asarray(phi).ravel()
    rows, rhs = [], []
    for s in range(len(cards)):
        r = np.zeros(nv)
        r[node_off[s]:node_off[s + 1]] = 1
        rows.append(r)
        rhs.append(1.0)
    for e, (s, t) in enumerate(g.edges):
        ks, kt = cards[s], cards[t]
        for i in range(ks):
            r = np.zeros(nv)
            for j in range(kt):
                r[edge_off[e] + i * kt + j] = 1
            r[node_off[s] + i] = -1
            rows.append(r)
            rhs.append(0.0)
        for j in range(kt):
            r = np.zeros(nv)
            for i in range(ks):
                r[edge_off[e] + i * kt + j] = 1
            r[node_off[t] + j] = -1
            rows.append(r)
            rhs.append(0.0)
    a_ub, b_ub = None, None
    if injective:
        ub = []
        for j in range(max(cards)):
            if j == injective_outlier:
                continue
            r = np.zeros(nv)
            for s in range(len(cards)):
                if j < cards[s]:
                    r[node_off[s] + j] = 1
            ub.append(r)
        a_ub, b_ub = np.array(ub), np.ones(len(ub))
    res = linprog(-c, A_ub=a_ub, b_ub=b_ub, A_eq=np.array(rows), b_eq=np.array(rhs), bounds=(0, 1), method="highs")
    assert res.status == 0, res.message
    return float(-res.fun)
