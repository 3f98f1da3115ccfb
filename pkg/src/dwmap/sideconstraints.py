"""Global solution constraints over node indicators.

A constraint is linear in the indicators ``x_s^i``. Each indicator is lifted
to edge variables through the node's lowest-id incident edge; at any point
satisfying the consistency rows every incident edge yields the same marginal,
so the choice of edge does not change the feasible set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from dwmap.model import Graph
from dwmap.relaxation import ConstraintRow, ConstraintSystem, marginal_indices

FEAS_TOL = 1e-9


class SideConstraintError(ValueError):
    pass


class UnsatisfiableError(SideConstraintError):
    """No assignment satisfies the constraints (proven by exhaustive search)."""


@dataclass(frozen=True)
class InjectiveConstraint:
    """At most one node per state, except the optional outlier state.

    ``nodes=None`` means every node of the graph.
    """

    nodes: tuple[int, ...] | None = None
    outlier_state: int | None = None


@dataclass(frozen=True)
class LinearConstraint:
    terms: tuple[tuple[int, int, float], ...]  # (node, state, coefficient)
    sense: str
    rhs: float

    def __post_init__(self) -> None:
        if self.sense not in ("=", "<=", ">="):
            raise SideConstraintError(f"unknown sense {self.sense!r}")
        object.__setattr__(self, "terms", tuple((int(s), int(i), float(c)) for s, i, c in self.terms))


SideConstraint = Union[InjectiveConstraint, LinearConstraint]


def expand(constraints: Iterable[SideConstraint], g: Graph) -> list[LinearConstraint]:
    """Validate ``constraints`` and rewrite them as node-level linear rows."""
    rows: list[LinearConstraint] = []
    for sc in constraints:
        if isinstance(sc, LinearConstraint):
            for s, i, _ in sc.terms:
                if not (0 <= s < g.num_nodes and 0 <= i < g.cardinalities[s]):
                    raise SideConstraintError(f"constraint references invalid (node, state) ({s}, {i})")
            rows.append(sc)
        elif isinstance(sc, InjectiveConstraint):
            nodes = tuple(range(g.num_nodes)) if sc.nodes is None else tuple(sc.nodes)
            for s in nodes:
                if not 0 <= s < g.num_nodes:
                    raise SideConstraintError(f"constraint references invalid node {s}")
                if sc.outlier_state is not None and not 0 <= sc.outlier_state < g.cardinalities[s]:
                    raise SideConstraintError(f"outlier state {sc.outlier_state} is not a state of node {s}")
            top = max((g.cardinalities[s] for s in nodes), default=0)
            for j in range(top):
                if j == sc.outlier_state:
                    continue
                members = [s for s in nodes if j < g.cardinalities[s]]
                if len(members) >= 2:
                    rows.append(LinearConstraint(tuple((s, j, 1.0) for s in members), "<=", 1.0))
        else:
            raise SideConstraintError(f"unsupported constraint {sc!r}")
    return rows


def remap(constraints: Iterable[SideConstraint], node_map: Mapping[int, int]) -> list[SideConstraint]:
    """Renumber nodes, e.g. onto the core graph without isolated nodes."""
    out: list[SideConstraint] = []
    for sc in constraints:
        try:
            if isinstance(sc, LinearConstraint):
                out.append(LinearConstraint(tuple((node_map[s], i, c) for s, i, c in sc.terms), sc.sense, sc.rhs))
            elif sc.nodes is None:
                out.append(sc)
            else:
                out.append(InjectiveConstraint(tuple(node_map[s] for s in sc.nodes), sc.outlier_state))
        except KeyError as exc:
            raise SideConstraintError(f"constraint over isolated node {exc.args[0]}") from None
    return out


def inject(cs: ConstraintSystem, constraints: Sequence[SideConstraint], g: Graph) -> ConstraintSystem:
    """Append side rows expressed in edge variables."""
    rows = []
    for lc in expand(constraints, g):
        terms: dict[int, tuple[list, list]] = {}
        for s, i, coef in lc.terms:
            if not g.incident_edges[s]:
                raise SideConstraintError(f"constraint over isolated node {s}")
            e = min(g.incident_edges[s])
            idx = marginal_indices(g, e, s, i)
            acc = terms.setdefault(e, ([], []))
            acc[0].append(idx)
            acc[1].append(np.full(idx.size, coef))
        packed = {e: (np.concatenate(ix), np.concatenate(cf)) for e, (ix, cf) in sorted(terms.items())}
        rows.append(ConstraintRow("side", lc.sense, lc.rhs, packed, ("side", len(rows))))
    return cs.with_rows(rows)


def row_satisfied(lhs: float, sense: str, rhs: float, tol: float = FEAS_TOL) -> bool:
    if sense == "<=":
        return lhs <= rhs + tol
    if sense == ">=":
        return lhs >= rhs - tol
    return abs(lhs - rhs) <= tol


def satisfies(g: Graph, assignment: Sequence[int], constraints: Sequence[SideConstraint]) -> bool:
    for lc in expand(constraints, g):
        lhs = sum(c for s, i, c in lc.terms if assignment[s] == i)
        if not row_satisfied(lhs, lc.sense, lc.rhs):
            return False
    return True


class RowChecker:
    """Incremental interval test for partial assignments.

    For each row it tracks the exact contribution of assigned nodes and the
    min/max contribution still reachable by unassigned nodes over their
    allowed states. A partial assignment is rejected as soon as some row can no
    longer be satisfied.
    """

    def __init__(self, g: Graph, rows: Sequence[LinearConstraint], allowed: Sequence[Sequence[int]] | None = None):
        self.rows = list(rows)
        self.sense = [r.sense for r in self.rows]
        self.rhs = np.array([r.rhs for r in self.rows], dtype=float)
        allowed = allowed if allowed is not None else [range(k) for k in g.cardinalities]
        self.coef: list[dict[int, list[tuple[int, float]]]] = [dict() for _ in range(g.num_nodes)]
        for r, lc in enumerate(self.rows):
            for s, i, c in lc.terms:
                self.coef[s].setdefault(i, []).append((r, c))
        nrows = len(self.rows)
        self.node_rows: list[list[int]] = [[] for _ in range(g.num_nodes)]
        self.node_min: list[dict[int, float]] = [dict() for _ in range(g.num_nodes)]
        self.node_max: list[dict[int, float]] = [dict() for _ in range(g.num_nodes)]
        self.fixed = np.zeros(nrows)
        self.rem_min = np.zeros(nrows)
        self.rem_max = np.zeros(nrows)
        for s in range(g.num_nodes):
            contribs = [self._contrib(s, i) for i in allowed[s]]
            touched = sorted(set().union(*contribs)) if contribs else []
            for r in touched:
                vals = [c.get(r, 0.0) for c in contribs]
                self.node_min[s][r] = min(vals)
                self.node_max[s][r] = max(vals)
                self.rem_min[r] += min(vals)
                self.rem_max[r] += max(vals)
            self.node_rows[s] = touched

    def _contrib(self, s: int, i: int) -> dict[int, float]:
        out: dict[int, float] = {}
        for r, c in self.coef[s].get(i, ()):
            out[r] = out.get(r, 0.0) + c
        return out

    def assign(self, s: int, i: int) -> bool:
        """Fix node ``s`` to state ``i``; return whether its rows stay satisfiable."""
        contrib = self._contrib(s, i)
        ok = True
        for r in self.node_rows[s]:
            self.rem_min[r] -= self.node_min[s][r]
            self.rem_max[r] -= self.node_max[s][r]
            self.fixed[r] += contrib.get(r, 0.0)
            if ok and not self._row_ok(r):
                ok = False
        return ok

    def unassign(self, s: int, i: int) -> None:
        contrib = self._contrib(s, i)
        for r in self.node_rows[s]:
            self.rem_min[r] += self.node_min[s][r]
            self.rem_max[r] += self.node_max[s][r]
            self.fixed[r] -= contrib.get(r, 0.0)

    def _row_ok(self, r: int) -> bool:
        lo = self.fixed[r] + self.rem_min[r]
        hi = self.fixed[r] + self.rem_max[r]
        sense, rhs = self.sense[r], self.rhs[r]
        if sense == "<=":
            return lo <= rhs + FEAS_TOL
        if sense == ">=":
            return hi >= rhs - FEAS_TOL
        return lo <= rhs + FEAS_TOL and hi >= rhs - FEAS_TOL

    def all_ok(self) -> bool:
        return all(self._row_ok(r) for r in range(len(self.rows)))


def adjusted_local_scores(g: Graph) -> list[np.ndarray]:
    """Local potential plus the pairwise tables summed over each neighbour's states."""
    scores = [np.array(phi, dtype=float) for phi in g.local_potentials]
    for (s, t), phi in zip(g.edges, g.pairwise_potentials):
        scores[s] += phi.sum(axis=1)
        scores[t] += phi.sum(axis=0)
    return scores


def _preference(scores: np.ndarray) -> list[int]:
    # best score first; ties by lowest state index
    return sorted(range(scores.size), key=lambda i: (-scores[i], i))


def feasible_init(
    g: Graph,
    constraints: Sequence[SideConstraint],
    exhaustive_node_cap: int = 40,
    search_budget: int = 1_000_000,
) -> list[int]:
    """Assignment satisfying ``constraints``, close to the unconstrained start.

    Nodes are visited by descending degree and take their best still-feasible
    state. If the greedy pass gets stuck, a depth-first search with the same
    ordering takes over; it is exhaustive for graphs up to
    ``exhaustive_node_cap`` nodes and limited to ``search_budget`` expansions
    beyond that.
    """
    scores = adjusted_local_scores(g)
    rows = expand(constraints, g)
    order = sorted(range(g.num_nodes), key=lambda s: (-g.degree(s), s))
    prefs = [_preference(sc) for sc in scores]

    checker = RowChecker(g, rows)
    greedy: list[int] = [0] * g.num_nodes
    stuck = False
    for s in order:
        for i in prefs[s]:
            if checker.assign(s, i):
                greedy[s] = i
                break
            checker.unassign(s, i)
        else:
            stuck = True
            break
    if not stuck:
        return greedy

    checker = RowChecker(g, rows)
    out = [0] * g.num_nodes
    budget = None if g.num_nodes <= exhaustive_node_cap else search_budget
    expansions = 0

    def dfs(pos: int) -> bool:
        nonlocal expansions
        if pos == len(order):
            return True
        s = order[pos]
        for i in prefs[s]:
            expansions += 1
            if budget is not None and expansions > budget:
                raise SideConstraintError("no feasible initial assignment found within the search budget")
            if checker.assign(s, i):
                out[s] = i
                if dfs(pos + 1):
                    return True
            checker.unassign(s, i)
        return False

    if not dfs(0):
        raise UnsatisfiableError("side constraints admit no assignment")
    return out
