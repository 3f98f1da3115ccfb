"""Exact enumeration and loopy max-product, used as oracles and baselines."""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from dwmap.model import Graph
from dwmap.sideconstraints import FEAS_TOL, SideConstraint, expand

BRUTE_FORCE_CAP = 10**7
_CHUNK = 1 << 18


class StateSpaceTooLarge(ValueError):
    pass


def brute_force_map(
    g: Graph,
    side_constraints: Sequence[SideConstraint] = (),
    cap: int = BRUTE_FORCE_CAP,
) -> tuple[list[int], float]:
    """Enumerate every joint assignment; ties go to the lexicographically first.

    Raises ``ValueError`` if no assignment satisfies the side constraints.
    """
    cards = tuple(g.cardinalities)
    total = math.prod(cards)
    if total > cap:
        raise StateSpaceTooLarge(f"{total} joint assignments exceed the cap of {cap}")
    rows = expand(side_constraints, g)
    best_value = -np.inf
    best_flat = -1
    for lo in range(0, total, _CHUNK):
        flat = np.arange(lo, min(total, lo + _CHUNK))
        states = np.unravel_index(flat, cards) if cards else ()
        score = np.zeros(flat.size)
        for s, phi in enumerate(g.local_potentials):
            score += phi[states[s]]
        for (s, t), phi in zip(g.edges, g.pairwise_potentials):
            score += phi[states[s], states[t]]
        for row in rows:
            lhs = np.zeros(flat.size)
            for s, i, c in row.terms:
                lhs += c * (states[s] == i)
            if row.sense == "<=":
                ok = lhs <= row.rhs + FEAS_TOL
            elif row.sense == ">=":
                ok = lhs >= row.rhs - FEAS_TOL
            else:
                ok = np.abs(lhs - row.rhs) <= FEAS_TOL
            score[~ok] = -np.inf
        k = int(np.argmax(score))
        if score[k] > best_value:
            best_value, best_flat = float(score[k]), lo + k
    if best_flat < 0:
        raise ValueError("no assignment satisfies the side constraints")
    assignment = [int(v) for v in np.unravel_index(best_flat, cards)] if cards else []
    return assignment, best_value


class MaxProductResult(NamedTuple):
    assignment: list[int]
    converged: bool
    iterations: int


def max_product(g: Graph, max_iters: int = 100, damping: float = 0.0, tol: float = 1e-9) -> MaxProductResult:
    """Synchronous max-product in log space with max-normalized messages."""
    # msgs[e][0]: s -> t (over t's states), msgs[e][1]: t -> s (over s's states)
    msgs = [[np.zeros(g.cardinalities[t]), np.zeros(g.cardinalities[s])] for s, t in g.edges]
    local = [np.asarray(phi) for phi in g.local_potentials]

    def incoming(s: int) -> np.ndarray:
        total = local[s].copy()
        for e in g.incident_edges[s]:
            total += msgs[e][0] if g.edges[e][1] == s else msgs[e][1]
        return total

    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        beliefs = [incoming(s) for s in range(g.num_nodes)]
        change = 0.0
        new = []
        for e, (s, t) in enumerate(g.edges):
            phi = g.pairwise_potentials[e]
            from_s = beliefs[s] - msgs[e][1]
            from_t = beliefs[t] - msgs[e][0]
            to_t = (phi + from_s[:, None]).max(axis=0)
            to_s = (phi + from_t[None, :]).max(axis=1)
            to_t -= to_t.max()
            to_s -= to_s.max()
            if damping:
                to_t = (1 - damping) * to_t + damping * msgs[e][0]
                to_s = (1 - damping) * to_s + damping * msgs[e][1]
            change = max(change, float(np.abs(to_t - msgs[e][0]).max()), float(np.abs(to_s - msgs[e][1]).max()))
            new.append([to_t, to_s])
        msgs = new
        if change < tol:
            converged = True
            break
    assignment = [int(np.argmax(incoming(s))) for s in range(g.num_nodes)]
    return MaxProductResult(assignment, converged, iterations)
