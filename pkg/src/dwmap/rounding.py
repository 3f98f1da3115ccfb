"""Integer rounding of a fractional LP solution.

Nodes whose recovered marginal has a single non-zero entry are fixed; the rest
keep only their non-zero states and an exact branch-and-bound search picks the
best joint assignment over that restricted space.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dwmap.model import Graph, log_score
from dwmap.sideconstraints import RowChecker, SideConstraint, expand

log = logging.getLogger(__name__)

DEFAULT_EPS = 1e-6
DEFAULT_CAP = 10**7


class RoundingError(RuntimeError):
    pass


class RoundingCapExceeded(RoundingError):
    pass


@dataclass(frozen=True)
class Surviving:
    states: list[list[int]]  # surviving states per node, ascending
    fractional: list[int]  # nodes with more than one surviving state

    @property
    def fraction(self) -> float:
        return len(self.fractional) / len(self.states) if self.states else 0.0

    def fixed(self) -> dict[int, int]:
        return {s: st[0] for s, st in enumerate(self.states) if len(st) == 1}


def fractional_nodes(node_values: Sequence[np.ndarray], eps: float = DEFAULT_EPS) -> Surviving:
    states = []
    for s, x in enumerate(node_values):
        keep = np.flatnonzero(np.asarray(x) > eps).tolist()
        if not keep:
            raise RoundingError(f"node {s} has no state above eps={eps}")
        states.append(keep)
    return Surviving(states, [s for s, st in enumerate(states) if len(st) > 1])


def round_ip(
    g: Graph,
    surviving: Sequence[Sequence[int]],
    side_constraints: Sequence[SideConstraint] = (),
    cap: int = DEFAULT_CAP,
) -> tuple[list[int], float]:
    """Best assignment with each node restricted to its surviving states.

    Depth-first branch and bound. The bound adds, for every undecided node,
    its best allowed local term and, for every edge with an undecided
    endpoint, its best pairwise term given whatever endpoint is decided.
    """
    allowed = [list(map(int, st)) for st in surviving]
    if len(allowed) != g.num_nodes:
        raise RoundingError("need a surviving-state set for every node")
    size = math.prod(len(st) for st in allowed)
    if size > cap:
        raise RoundingCapExceeded(f"restricted space has {size} assignments, above the cap of {cap}")

    checker = RowChecker(g, expand(side_constraints, g), allowed)
    local = [np.asarray(phi) for phi in g.local_potentials]
    pair = [np.asarray(phi) for phi in g.pairwise_potentials]
    local_best = [float(local[s][allowed[s]].max()) for s in range(g.num_nodes)]
    pair_best = [float(pair[e][np.ix_(allowed[s], allowed[t])].max()) for e, (s, t) in enumerate(g.edges)]

    fixed = [s for s in range(g.num_nodes) if len(allowed[s]) == 1]
    free = sorted((s for s in range(g.num_nodes) if len(allowed[s]) > 1), key=lambda s: (-g.degree(s), s))
    x = [-1] * g.num_nodes
    for s in fixed:
        x[s] = allowed[s][0]
        if not checker.assign(s, x[s]):
            raise RoundingError("fixed nodes already violate the side constraints")

    def edge_term(e: int) -> float:
        s, t = g.edges[e]
        xs, xt = x[s], x[t]
        if xs >= 0 and xt >= 0:
            return float(pair[e][xs, xt])
        if xs >= 0:
            return float(pair[e][xs, allowed[t]].max())
        if xt >= 0:
            return float(pair[e][allowed[s], xt].max())
        return pair_best[e]

    def bound() -> float:
        total = sum(float(local[s][x[s]]) if x[s] >= 0 else local_best[s] for s in range(g.num_nodes))
        return total + sum(edge_term(e) for e in range(g.num_edges))

    best_value = -math.inf
    best: list[int] | None = None

    def search(pos: int) -> None:
        nonlocal best_value, best
        if pos == len(free):
            if checker.all_ok():
                value = bound()  # exact once every node is decided
                if value > best_value:
                    best_value, best = value, list(x)
            return
        s = free[pos]
        for i in sorted(allowed[s], key=lambda i: (-local[s][i], i)):
            if checker.assign(s, i):
                x[s] = i
                if bound() > best_value:
                    search(pos + 1)
                x[s] = -1
            checker.unassign(s, i)

    search(0)
    if best is None:
        raise RoundingError("no restricted assignment satisfies the side constraints")
    return best, log_score(g, best)


@dataclass(frozen=True)
class RoundingResult:
    assignment: list[int]
    value: float
    fractional_fraction: float
    fallback: bool


def round_solution(
    g: Graph,
    frac,
    side_constraints: Sequence[SideConstraint] = (),
    eps: float = DEFAULT_EPS,
    cap: int = DEFAULT_CAP,
) -> RoundingResult:
    """Round a :class:`~dwmap.decomposition.FractionalSolution`.

    When the restricted space exceeds ``cap`` the per-node argmax of the
    marginals is returned instead, with a warning.
    """
    surv = fractional_nodes(frac.node_values, eps)
    try:
        assignment, value = round_ip(g, surv.states, side_constraints, cap)
        return RoundingResult(assignment, value, surv.fraction, False)
    except RoundingCapExceeded as exc:
        log.warning("%s; falling back to per-node argmax", exc)
        assignment = [int(np.argmax(x)) for x in frac.node_values]
        return RoundingResult(assignment, log_score(g, assignment), surv.fraction, True)
