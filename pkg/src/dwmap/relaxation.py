"""Edge-variable LP relaxation: marginals, consistency rows, full LP assembly."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from dwmap.model import Graph, GraphError, degree_check

DEFAULT_VARIABLE_CAP = 2_000_000

SENSES = ("=", "<=", ">=")


class RelaxationError(ValueError):
    pass


class LPTooLargeError(RelaxationError):
    pass


def marginalize(y: np.ndarray, shape: tuple[int, int], endpoint: str) -> np.ndarray:
    """Sum an edge variable down to one endpoint's state distribution."""
    y = np.asarray(y, dtype=float)
    ns, nt = shape
    if y.shape != (ns * nt,):
        raise RelaxationError(f"edge variable has length {y.size}, expected {ns * nt}")
    table = y.reshape(ns, nt)
    if endpoint == "s":
        return table.sum(axis=1)
    if endpoint == "t":
        return table.sum(axis=0)
    raise RelaxationError(f"endpoint must be 's' or 't', got {endpoint!r}")


def marginal_indices(g: Graph, edge: int, node: int, state: int) -> np.ndarray:
    """Flat indices of ``edge``'s variable whose ``node``-state equals ``state``."""
    s, t = g.edges[edge]
    ns, nt = g.cardinalities[s], g.cardinalities[t]
    if node == s:
        return state * nt + np.arange(nt)
    if node == t:
        return np.arange(ns) * nt + state
    raise GraphError(f"node {node} is not an endpoint of edge {edge}")


def node_marginal(g: Graph, edge: int, node: int, y: np.ndarray) -> np.ndarray:
    s, t = g.edges[edge]
    endpoint = "s" if node == s else "t"
    if node not in (s, t):
        raise GraphError(f"node {node} is not an endpoint of edge {edge}")
    return marginalize(y, (g.cardinalities[s], g.cardinalities[t]), endpoint)


@dataclass(frozen=True)
class ConstraintRow:
    kind: str  # "consistency" or "side"
    sense: str
    rhs: float
    terms: dict[int, tuple[np.ndarray, np.ndarray]]  # edge -> (flat indices, coefficients)
    label: tuple = ()


@dataclass(frozen=True)
class EdgeBlock:
    """Rows of the constraint system restricted to one edge's variables."""

    edge: int
    row_ids: np.ndarray  # global row ids, ascending
    matrix: sp.csc_matrix  # len(row_ids) x edge size

    def column(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.matrix.indptr[k], self.matrix.indptr[k + 1]
        return self.row_ids[self.matrix.indices[lo:hi]], self.matrix.data[lo:hi].copy()

    def adjusted_cost(self, cost: np.ndarray, pi_block: np.ndarray) -> np.ndarray:
        if self.row_ids.size == 0:
            return np.array(cost, dtype=float)
        return cost - self.matrix.T @ pi_block


@dataclass(frozen=True)
class ConstraintSystem:
    edge_sizes: tuple[int, ...]
    rows: tuple[ConstraintRow, ...]
    blocks: tuple[EdgeBlock, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        per_edge: list[list[tuple[int, np.ndarray, np.ndarray]]] = [[] for _ in self.edge_sizes]
        for r, row in enumerate(self.rows):
            if row.sense not in SENSES:
                raise RelaxationError(f"row {r} has unknown sense {row.sense!r}")
            for e, (idx, coef) in row.terms.items():
                per_edge[e].append((r, np.asarray(idx), np.asarray(coef, dtype=float)))
        blocks = []
        for e, entries in enumerate(per_edge):
            row_ids = np.array(sorted({r for r, _, _ in entries}), dtype=np.int64)
            local = {r: i for i, r in enumerate(row_ids.tolist())}
            ri = [np.full(idx.size, local[r]) for r, idx, _ in entries]
            ci = [idx for _, idx, _ in entries]
            vals = [coef for _, _, coef in entries]
            matrix = sp.csc_matrix(
                (
                    np.concatenate(vals) if vals else np.zeros(0),
                    (np.concatenate(ri) if ri else np.zeros(0, int), np.concatenate(ci) if ci else np.zeros(0, int)),
                ),
                shape=(row_ids.size, self.edge_sizes[e]),
            )
            matrix.sum_duplicates()
            matrix.sort_indices()
            blocks.append(EdgeBlock(e, row_ids, matrix))
        object.__setattr__(self, "blocks", tuple(blocks))

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    @property
    def num_edges(self) -> int:
        return len(self.edge_sizes)

    def count(self, kind: str) -> int:
        return sum(1 for row in self.rows if row.kind == kind)

    def with_rows(self, extra: Sequence[ConstraintRow]) -> "ConstraintSystem":
        if not extra:
            return self
        return ConstraintSystem(self.edge_sizes, self.rows + tuple(extra))

    def senses(self) -> list[str]:
        return [row.sense for row in self.rows]

    def rhs(self) -> np.ndarray:
        return np.array([row.rhs for row in self.rows], dtype=float)

    def row_activity(self, ys: Sequence[np.ndarray]) -> np.ndarray:
        """Left-hand side of every row evaluated at per-edge variables ``ys``."""
        out = np.zeros(self.num_rows)
        for r, row in enumerate(self.rows):
            out[r] = sum(float(np.dot(coef, np.asarray(ys[e])[idx])) for e, (idx, coef) in row.terms.items())
        return out


def build_consistency_rows(g: Graph) -> ConstraintSystem:
    """Reference-edge consistency rows.

    For a node with incident edges ``e_1 < ... < e_d`` the marginal of ``e_1``
    is tied to the marginal of every ``e_m``, one row per state.
    """
    isolated = degree_check(g)
    if isolated:
        raise RelaxationError(f"isolated nodes present: {isolated}")
    rows = []
    for s in range(g.num_nodes):
        incident = sorted(g.incident_edges[s])
        ref = incident[0]
        for other in incident[1:]:
            for i in range(g.cardinalities[s]):
                ref_idx = marginal_indices(g, ref, s, i)
                other_idx = marginal_indices(g, other, s, i)
                terms = {
                    ref: (ref_idx, np.ones(ref_idx.size)),
                    other: (other_idx, -np.ones(other_idx.size)),
                }
                rows.append(ConstraintRow("consistency", "=", 0.0, terms, (s, ref, other, i)))
    return ConstraintSystem(tuple(g.edge_size(e) for e in range(g.num_edges)), tuple(rows))


@dataclass(frozen=True)
class DenseLP:
    """Maximize ``objective @ x`` subject to equality, ``<=`` rows and bounds."""

    objective: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        n = np.asarray(self.objective).shape[0]
        for name in ("a_eq", "a_ub"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.ndim != 2 or a.shape[1] != n:
                raise RelaxationError(f"{name} must have {n} columns, got shape {a.shape}")
        if np.asarray(self.a_eq).shape[0] != np.asarray(self.b_eq).shape[0]:
            raise RelaxationError("a_eq and b_eq row counts differ")
        if np.asarray(self.a_ub).shape[0] != np.asarray(self.b_ub).shape[0]:
            raise RelaxationError("a_ub and b_ub row counts differ")
        if np.asarray(self.lower).shape != (n,) or np.asarray(self.upper).shape != (n,):
            raise RelaxationError("bounds must have one entry per variable")
        if np.any(np.asarray(self.lower) > np.asarray(self.upper)):
            raise RelaxationError("lower bound exceeds upper bound")

    @property
    def num_vars(self) -> int:
        return int(np.asarray(self.objective).shape[0])

    @classmethod
    def build(cls, objective, a_eq=None, b_eq=None, a_ub=None, b_ub=None, lower=None, upper=None) -> "DenseLP":
        c = np.asarray(objective, dtype=float).reshape(-1)
        n = c.size
        a_eq = np.zeros((0, n)) if a_eq is None else np.asarray(a_eq, dtype=float).reshape(-1, n)
        b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
        a_ub = np.zeros((0, n)) if a_ub is None else np.asarray(a_ub, dtype=float).reshape(-1, n)
        b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
        lower = np.zeros(n) if lower is None else np.asarray(lower, dtype=float).reshape(-1)
        upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float).reshape(-1)
        return cls(c, a_eq, b_eq, a_ub, b_ub, lower, upper)


@dataclass(frozen=True)
class FullLP:
    lp: DenseLP
    offsets: tuple[int, ...]  # first variable of each edge
    eq_rows: tuple[int, ...]  # system row id of each equality row (-1 for normalization)
    ub_rows: tuple[tuple[int, float], ...]  # (system row id, sign) of each <= row

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        bounds = list(self.offsets) + [self.lp.num_vars]
        return [np.asarray(x[bounds[e] : bounds[e + 1]]) for e in range(len(self.offsets))]


def assemble_full_lp(
    g: Graph,
    cs: ConstraintSystem,
    costs: Sequence[np.ndarray],
    variable_cap: int = DEFAULT_VARIABLE_CAP,
) -> FullLP:
    """Materialize the whole relaxation as a dense LP.

    Equality rows of ``cs`` come first, then one normalization row per edge.
    Inequality side rows become ``<=`` rows (``>=`` rows are negated).
    """
    if len(costs) != g.num_edges:
        raise RelaxationError(f"got {len(costs)} edge costs for {g.num_edges} edges")
    sizes = [g.edge_size(e) for e in range(g.num_edges)]
    for e, c in enumerate(costs):
        if np.asarray(c).shape != (sizes[e],):
            raise RelaxationError(f"cost of edge {e} has wrong length")
    n = int(sum(sizes))
    if n > variable_cap:
        raise LPTooLargeError(f"full LP has {n} variables, above the cap of {variable_cap}")
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int) if sizes else np.zeros(0, int)

    eq_ids = [r for r, row in enumerate(cs.rows) if row.sense == "="]
    ub_ids = [(r, 1.0 if row.sense == "<=" else -1.0) for r, row in enumerate(cs.rows) if row.sense != "="]
    a_eq = np.zeros((len(eq_ids) + g.num_edges, n))
    b_eq = np.zeros(len(eq_ids) + g.num_edges)
    for i, r in enumerate(eq_ids):
        row = cs.rows[r]
        for e, (idx, coef) in row.terms.items():
            np.add.at(a_eq[i], offsets[e] + idx, coef)
        b_eq[i] = row.rhs
    for e in range(g.num_edges):
        a_eq[len(eq_ids) + e, offsets[e] : offsets[e] + sizes[e]] = 1.0
        b_eq[len(eq_ids) + e] = 1.0
    a_ub = np.zeros((len(ub_ids), n))
    b_ub = np.zeros(len(ub_ids))
    for i, (r, sign) in enumerate(ub_ids):
        row = cs.rows[r]
        for e, (idx, coef) in row.terms.items():
            np.add.at(a_ub[i], offsets[e] + idx, sign * np.asarray(coef))
        b_ub[i] = sign * row.rhs

    objective = np.concatenate([np.asarray(c, dtype=float) for c in costs]) if costs else np.zeros(0)
    lp = DenseLP(objective, a_eq, b_eq, a_ub, b_ub, np.zeros(n), np.ones(n))
    return FullLP(lp, tuple(int(o) for o in offsets), tuple(eq_ids) + (-1,) * g.num_edges, tuple(ub_ids))


def one_hot_edges(g: Graph, assignment: Sequence[int]) -> list[np.ndarray]:
    """Edge variables encoding an integral node assignment."""
    ys = []
    for e, (s, t) in enumerate(g.edges):
        y = np.zeros(g.edge_size(e))
        y[assignment[s] * g.cardinalities[t] + assignment[t]] = 1.0
        ys.append(y)
    return ys
