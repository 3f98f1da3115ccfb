"""Discrete pairwise Markov random fields and the MAP objective.

States are 0-based throughout the package. Potentials are additive log-space
scores; the log-partition constant is never computed since it does not move
the argmax.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class GraphError(ValueError):
    """Raised for malformed graphs, unknown edges or invalid assignments."""


@dataclass(frozen=True, eq=False)
class Graph:
    cardinalities: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    local_potentials: tuple[np.ndarray, ...]
    pairwise_potentials: tuple[np.ndarray, ...]
    neighbors: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    incident_edges: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        cards = tuple(int(k) for k in self.cardinalities)
        if any(k < 1 for k in cards):
            raise GraphError("every node needs at least one state")
        n = len(cards)
        edges = tuple((int(s), int(t)) for s, t in self.edges)
        seen: set[frozenset[int]] = set()
        for e, (s, t) in enumerate(edges):
            if not (0 <= s < n and 0 <= t < n):
                raise GraphError(f"edge {e} ({s}, {t}) references an unknown node")
            if s == t:
                raise GraphError(f"edge {e} is a self-loop on node {s}")
            key = frozenset((s, t))
            if key in seen:
                raise GraphError(f"edge {e} duplicates the pair ({s}, {t})")
            seen.add(key)

        if len(self.local_potentials) != n:
            raise GraphError("need one local potential per node")
        if len(self.pairwise_potentials) != len(edges):
            raise GraphError("need one pairwise potential per edge")
        local = []
        for s, phi in enumerate(self.local_potentials):
            phi = np.array(phi, dtype=float).reshape(-1)
            if phi.shape != (cards[s],):
                raise GraphError(f"local potential of node {s} has shape {phi.shape}, expected ({cards[s]},)")
            if not np.all(np.isfinite(phi)):
                raise GraphError(f"local potential of node {s} is not finite")
            phi.setflags(write=False)
            local.append(phi)
        pairwise = []
        for e, ((s, t), phi) in enumerate(zip(edges, self.pairwise_potentials)):
            phi = np.array(phi, dtype=float)
            if phi.shape != (cards[s], cards[t]):
                raise GraphError(
                    f"pairwise potential of edge {e} has shape {phi.shape}, expected ({cards[s]}, {cards[t]})"
                )
            if not np.all(np.isfinite(phi)):
                raise GraphError(f"pairwise potential of edge {e} is not finite")
            phi.setflags(write=False)
            pairwise.append(phi)

        neighbors: list[list[int]] = [[] for _ in range(n)]
        incident: list[list[int]] = [[] for _ in range(n)]
        for e, (s, t) in enumerate(edges):
            neighbors[s].append(t)
            neighbors[t].append(s)
            incident[s].append(e)
            incident[t].append(e)

        object.__setattr__(self, "cardinalities", cards)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "local_potentials", tuple(local))
        object.__setattr__(self, "pairwise_potentials", tuple(pairwise))
        object.__setattr__(self, "neighbors", tuple(tuple(v) for v in neighbors))
        object.__setattr__(self, "incident_edges", tuple(tuple(v) for v in incident))

    @property
    def num_nodes(self) -> int:
        return len(self.cardinalities)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degree(self, s: int) -> int:
        return len(self.neighbors[s])

    def edge_size(self, e: int) -> int:
        s, t = self.edges[e]
        return self.cardinalities[s] * self.cardinalities[t]

    def state_space_size(self) -> int:
        return int(np.prod(self.cardinalities, dtype=object)) if self.cardinalities else 1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.cardinalities == other.cardinalities
            and self.edges == other.edges
            and all(np.array_equal(a, b) for a, b in zip(self.local_potentials, other.local_potentials))
            and all(np.array_equal(a, b) for a, b in zip(self.pairwise_potentials, other.pairwise_potentials))
        )

    __hash__ = None  # type: ignore[assignment]


def check_assignment(g: Graph, assignment: Sequence[int]) -> np.ndarray:
    states = np.asarray(assignment, dtype=np.int64).reshape(-1)
    if states.shape[0] != g.num_nodes:
        raise GraphError(f"assignment has {states.shape[0]} entries for {g.num_nodes} nodes")
    cards = np.asarray(g.cardinalities, dtype=np.int64)
    bad = np.nonzero((states < 0) | (states >= cards))[0]
    if bad.size:
        s = int(bad[0])
        raise GraphError(f"state {int(states[s])} of node {s} outside [0, {g.cardinalities[s]})")
    return states


def combined_edge_cost(g: Graph, edge: int) -> np.ndarray:
    """Row-major flattening of the combined pairwise table of ``edge``.

    The local potential of each endpoint is split evenly over its incident
    edges: ``phi_s[i] / deg(s)`` is added along rows and ``phi_t[j] / deg(t)``
    along columns, so summing over all edges reproduces every local term once.
    """
    if not 0 <= edge < g.num_edges:
        raise GraphError(f"unknown edge id {edge}")
    s, t = g.edges[edge]
    q = (
        g.pairwise_potentials[edge]
        + (g.local_potentials[s] / g.degree(s))[:, None]
        + (g.local_potentials[t] / g.degree(t))[None, :]
    )
    return q.reshape(-1)


def edge_costs(g: Graph) -> list[np.ndarray]:
    return [combined_edge_cost(g, e) for e in range(g.num_edges)]


def map_objective(g: Graph, assignment: Sequence[int]) -> float:
    """Log-score of ``assignment`` summed over the combined edge tables.

    Isolated nodes have no edge to carry their local term, so it is added
    directly.
    """
    x = check_assignment(g, assignment)
    total = 0.0
    for e, (s, t) in enumerate(g.edges):
        total += combined_edge_cost(g, e)[x[s] * g.cardinalities[t] + x[t]]
    for s in degree_check(g):
        total += g.local_potentials[s][x[s]]
    return float(total)


def log_score(g: Graph, assignment: Sequence[int]) -> float:
    """Direct sum of local and pairwise terms; independent of the edge costs."""
    x = check_assignment(g, assignment)
    total = sum(float(phi[x[s]]) for s, phi in enumerate(g.local_potentials))
    total += sum(float(phi[x[s], x[t]]) for (s, t), phi in zip(g.edges, g.pairwise_potentials))
    return total


def degree_check(g: Graph) -> list[int]:
    """Nodes without incident edges."""
    return [s for s in range(g.num_nodes) if not g.neighbors[s]]


@dataclass(frozen=True)
class CoreSplit:
    """A graph with isolated nodes removed, plus the index maps back."""

    core: Graph
    core_to_full: tuple[int, ...]
    full_to_core: dict[int, int]
    isolated: tuple[int, ...]
    isolated_states: tuple[int, ...]

    def isolated_value(self, full: Graph) -> float:
        return float(sum(full.local_potentials[s][x] for s, x in zip(self.isolated, self.isolated_states)))

    def lift(self, full: Graph, core_assignment: Sequence[int]) -> list[int]:
        out = [0] * full.num_nodes
        for c, s in enumerate(self.core_to_full):
            out[s] = int(core_assignment[c])
        for s, x in zip(self.isolated, self.isolated_states):
            out[s] = x
        return out


def split_isolated(g: Graph) -> CoreSplit:
    """Separate degree-0 nodes, which are solved by a local argmax."""
    isolated = degree_check(g)
    iso = set(isolated)
    core_nodes = [s for s in range(g.num_nodes) if s not in iso]
    full_to_core = {s: c for c, s in enumerate(core_nodes)}
    core = Graph(
        cardinalities=tuple(g.cardinalities[s] for s in core_nodes),
        edges=tuple((full_to_core[s], full_to_core[t]) for s, t in g.edges),
        local_potentials=tuple(g.local_potentials[s] for s in core_nodes),
        pairwise_potentials=g.pairwise_potentials,
    )
    states = tuple(int(np.argmax(g.local_potentials[s])) for s in isolated)
    return CoreSplit(core, tuple(core_nodes), full_to_core, tuple(isolated), states)
