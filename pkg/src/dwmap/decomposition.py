"""Dantzig-Wolfe column generation over edge subprograms.

Every edge is a subprogram whose feasible set is the probability simplex over
its joint states, so pricing is an argmax over a dual-adjusted cost vector and
every column is a one-hot edge variable. The restricted master keeps a convex
combination of those one-hots per edge, tied together by the consistency and
side rows.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from dwmap.model import Graph, combined_edge_cost, log_score, split_isolated
from dwmap.relaxation import ConstraintSystem, EdgeBlock, build_consistency_rows, node_marginal
from dwmap.sideconstraints import (
    SideConstraint,
    adjusted_local_scores,
    feasible_init,
    inject,
    remap,
    satisfies,
)
from dwmap.simplex import MasterError, MasterSolution, SimplexOptions, Status, solve_restricted_master

log = logging.getLogger(__name__)

TIE_RULES = ("lowest-index", "max-cost")
# adjusted costs closer than this (relative) count as tied
TIE_EPS = 1e-12
MARGINAL_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class Column:
    edge: int
    index: int
    cost: float
    rows: np.ndarray
    values: np.ndarray
    iteration: int = 0

    @property
    def key(self) -> tuple[int, int]:
        return (self.edge, self.index)

    def same_as(self, other: "Column") -> bool:
        return (
            self.key == other.key
            and self.cost == other.cost
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class Duals:
    pi: np.ndarray
    gamma: np.ndarray


@dataclass(frozen=True)
class Subprogram:
    """Everything needed to price one edge; this is what a worker stores."""

    edge: int
    cost: np.ndarray
    block: EdgeBlock


@dataclass(frozen=True)
class EdgeProblem:
    graph: Graph
    costs: tuple[np.ndarray, ...]
    system: ConstraintSystem
    side_constraints: tuple[SideConstraint, ...] = ()

    @property
    def subprograms(self) -> list[Subprogram]:
        return [Subprogram(e, self.costs[e], self.system.blocks[e]) for e in range(self.graph.num_edges)]


def prepare(g: Graph, side_constraints: Sequence[SideConstraint] = ()) -> EdgeProblem:
    """Edge costs plus consistency and side rows for a graph without isolated nodes."""
    cs = build_consistency_rows(g)
    cs = inject(cs, side_constraints, g)
    costs = tuple(combined_edge_cost(g, e) for e in range(g.num_edges))
    return EdgeProblem(g, costs, cs, tuple(side_constraints))


@dataclass(frozen=True)
class DWConfig:
    max_iters: int = 1000
    columns_per_iter: int = 200
    purge_after_seconds: Optional[float] = None
    tie_rule: str = "lowest-index"
    tol: float = 1e-9
    round_eps: float = 1e-6
    round_cap: int = 10**7
    simplex: SimplexOptions = field(default_factory=SimplexOptions)

    def __post_init__(self) -> None:
        if self.tie_rule not in TIE_RULES:
            raise ValueError(f"unknown tie rule {self.tie_rule!r}")


@dataclass
class TraceRecord:
    iter: int
    objective: float
    columns_added: int
    pool_size: int
    master_ms: float
    pricing_ms: float
    bytes_tx: int = 0
    bytes_rx: int = 0


@dataclass
class FractionalSolution:
    edge_values: list[np.ndarray]
    node_values: list[np.ndarray]
    objective: float
    provisional: bool = False
    max_marginal_gap: float = 0.0


def column_for(sub: Subprogram, index: int, iteration: int = 0) -> Column:
    rows, values = sub.block.column(index)
    return Column(sub.edge, int(index), float(sub.cost[index]), rows, values, iteration)


def initialize(problem: EdgeProblem) -> tuple[list[int], list[Column]]:
    """Node-consistent starting columns, one per edge.

    Each node takes the argmax of its local potential plus the pairwise tables
    summed over the neighbour's states; every edge column is the one-hot of its
    endpoints' choices, so all consistency rows hold exactly.
    """
    g = problem.graph
    x = [int(np.argmax(sc)) for sc in adjusted_local_scores(g)]
    if problem.side_constraints and not satisfies(g, x, problem.side_constraints):
        x = feasible_init(g, problem.side_constraints)
    columns = []
    for sub in problem.subprograms:
        s, t = g.edges[sub.edge]
        columns.append(column_for(sub, x[s] * g.cardinalities[t] + x[t]))
    return x, columns


def best_index(adjusted: np.ndarray, actual: np.ndarray, tie_rule: str) -> int:
    top = float(adjusted.max())
    tied = np.flatnonzero(adjusted >= top - TIE_EPS * max(1.0, abs(top)))
    if tie_rule == "lowest-index" or tied.size == 1:
        return int(tied[0])
    if tie_rule == "max-cost":
        return int(tied[np.argmax(actual[tied])])
    raise ValueError(f"unknown tie rule {tie_rule!r}")


def price_block(
    sub: Subprogram, pi_block: np.ndarray, gamma_e: float, tie_rule: str, iteration: int = 0
) -> tuple[Column, float]:
    """Price one edge given the multipliers of the rows its block touches."""
    adjusted = sub.block.adjusted_cost(sub.cost, pi_block)
    k = best_index(adjusted, sub.cost, tie_rule)
    return column_for(sub, k, iteration), float(adjusted[k] - gamma_e)


def price_subprogram(
    sub: Subprogram, duals: Duals, tie_rule: str = "lowest-index", iteration: int = 0
) -> tuple[Column, float]:
    if sub.edge >= duals.gamma.size:
        raise ValueError(f"no convexity multiplier for edge {sub.edge}")
    if sub.block.row_ids.size and sub.block.row_ids[-1] >= duals.pi.size:
        raise ValueError("multiplier vector is shorter than the constraint system")
    return price_block(sub, duals.pi[sub.block.row_ids], float(duals.gamma[sub.edge]), tie_rule, iteration)


def price_all_serial(
    subprograms: Sequence[Subprogram], duals: Duals, tie_rule: str, iteration: int = 0
) -> list[tuple[Column, float]]:
    return [price_subprogram(sub, duals, tie_rule, iteration) for sub in subprograms]


def select_columns(
    candidates: Sequence[tuple[Column, float]],
    cap: int,
    tol: float,
    pooled: set[tuple[int, int]] = frozenset(),  # type: ignore[assignment]
) -> list[Column]:
    """Improving, not-yet-pooled candidates with the largest actual cost."""
    keep = [col for col, rc in candidates if rc > tol and col.key not in pooled]
    keep.sort(key=lambda col: (-col.cost, col.edge))
    return keep[:cap]


class Pricer:
    """Serial pricing; the runtime module provides parallel and remote ones."""

    bytes_tx = 0
    bytes_rx = 0

    def __init__(self, subprograms: Sequence[Subprogram]):
        self.subprograms = list(subprograms)

    def price_all(self, duals: Duals, tie_rule: str, iteration: int) -> list[tuple[Column, float]]:
        return price_all_serial(self.subprograms, duals, tie_rule, iteration)

    def close(self) -> None:
        pass


@dataclass
class DWState:
    problem: EdgeProblem
    config: DWConfig
    pricer: Pricer
    pool: list[Column] = field(default_factory=list)
    master: Optional[MasterSolution] = None
    duals: Optional[Duals] = None
    iteration: int = 0
    converged: bool = False
    trace: list[TraceRecord] = field(default_factory=list)
    candidates: list[list[tuple[Column, float]]] = field(default_factory=list)
    initial_assignment: list[int] = field(default_factory=list)
    last_master_seconds: float = 0.0
    purges: int = 0

    @property
    def objective(self) -> float:
        return float("-inf") if self.master is None else self.master.objective

    def pooled_keys(self) -> set[tuple[int, int]]:
        return {col.key for col in self.pool}


def _solve_master(state: DWState) -> float:
    t0 = time.perf_counter()
    master = solve_restricted_master(state.pool, state.problem.system, state.config.simplex)
    elapsed = time.perf_counter() - t0
    if master.status is not Status.OPTIMAL:
        raise MasterError(f"restricted master ended with status {master.status.value}")
    state.master = master
    state.duals = Duals(master.pi, master.gamma)
    state.last_master_seconds = elapsed
    return elapsed


def _record(state: DWState, added: int, master_s: float, pricing_s: float, tx0: int, rx0: int) -> None:
    state.trace.append(
        TraceRecord(
            iter=state.iteration,
            objective=state.objective,
            columns_added=added,
            pool_size=len(state.pool),
            master_ms=master_s * 1e3,
            pricing_ms=pricing_s * 1e3,
            bytes_tx=state.pricer.bytes_tx - tx0,
            bytes_rx=state.pricer.bytes_rx - rx0,
        )
    )


def start(problem: EdgeProblem, config: DWConfig | None = None, pricer: Pricer | None = None) -> DWState:
    """Initialize the pool and solve the first restricted master."""
    config = config or DWConfig()
    state = DWState(problem, config, pricer or Pricer(problem.subprograms))
    x, columns = initialize(problem)
    state.initial_assignment = x
    state.pool = columns
    master_s = _solve_master(state)
    _record(state, len(columns), master_s, 0.0, state.pricer.bytes_tx, state.pricer.bytes_rx)
    return state


def iterate(state: DWState) -> DWState:
    """Price every edge, add improving columns and re-solve the master."""
    if state.duals is None:
        raise MasterError("state has not been started")
    if state.converged:
        return state
    tx0, rx0 = state.pricer.bytes_tx, state.pricer.bytes_rx
    t0 = time.perf_counter()
    candidates = state.pricer.price_all(state.duals, state.config.tie_rule, state.iteration + 1)
    pricing_s = time.perf_counter() - t0
    state.candidates.append(candidates)
    chosen = select_columns(candidates, state.config.columns_per_iter, state.config.tol, state.pooled_keys())
    if not chosen:
        state.converged = True
        return state
    previous = state.objective
    state.iteration += 1
    state.pool.extend(chosen)
    master_s = _solve_master(state)
    if state.objective < previous - 1e-9 * (1.0 + abs(previous)):
        log.warning("master objective decreased from %r to %r", previous, state.objective)
    _record(state, len(chosen), master_s, pricing_s, tx0, rx0)
    return state


def purge_nonbasic(state: DWState, trigger: float | None = None) -> DWState:
    """Drop columns that are non-basic in the last master solve.

    Runs only when the last master solve took longer than ``trigger`` seconds
    (``None`` means always). Each edge keeps at least its heaviest column so
    the convexity rows stay satisfiable; the kept basis is still optimal.
    """
    if state.master is None:
        return state
    if trigger is not None and not state.last_master_seconds > trigger:
        return state
    alpha = state.master.alpha
    keep = np.zeros(len(state.pool), dtype=bool)
    keep[state.master.basic_columns] = True
    num_edges = state.problem.graph.num_edges
    best = np.full(num_edges, -1)
    for j, col in enumerate(state.pool):
        if best[col.edge] < 0 or alpha[j] > alpha[best[col.edge]]:
            best[col.edge] = j
    has = np.zeros(num_edges, dtype=bool)
    for j in np.flatnonzero(keep):
        has[state.pool[j].edge] = True
    for e in np.flatnonzero(~has):
        keep[best[e]] = True
    if keep.all():
        return state
    index = np.flatnonzero(keep)
    remap_basis = {int(old): new for new, old in enumerate(index)}
    state.pool = [state.pool[j] for j in index]
    m = state.master
    state.master = MasterSolution(
        m.lp,
        m.alpha[index],
        m.pi,
        m.gamma,
        np.array(sorted(remap_basis[int(j)] for j in m.basic_columns if int(j) in remap_basis), dtype=np.int64),
    )
    state.purges += 1
    return state


def recover(state: DWState) -> FractionalSolution:
    """Edge variables as alpha-weighted one-hots, node marginals from the first incident edge."""
    if state.master is None:
        raise MasterError("master has not been solved")
    g = state.problem.graph
    ys = [np.zeros(g.edge_size(e)) for e in range(g.num_edges)]
    alpha = np.clip(state.master.alpha, 0.0, None)
    for a, col in zip(alpha, state.pool):
        ys[col.edge][col.index] += a
    ys = [y / y.sum() for y in ys]
    return fractional_from_edges(g, ys, state.problem.costs, provisional=not state.converged)


def fractional_from_edges(
    g: Graph, ys: Sequence[np.ndarray], costs: Sequence[np.ndarray], provisional: bool = False
) -> FractionalSolution:
    xs = []
    gap = 0.0
    for s in range(g.num_nodes):
        incident = sorted(g.incident_edges[s])
        margs = [node_marginal(g, e, s, ys[e]) for e in incident]
        xs.append(margs[0])
        for other in margs[1:]:
            gap = max(gap, float(np.max(np.abs(other - margs[0]))))
    if not provisional and gap > MARGINAL_TOL:
        log.warning("node marginals disagree across incident edges by %.3g", gap)
    objective = float(sum(np.dot(c, y) for c, y in zip(costs, ys)))
    return FractionalSolution(list(ys), xs, objective, provisional, gap)


@dataclass
class DWResult:
    assignment: list[int]
    value: float
    lp_objective: float
    converged: bool
    iterations: int
    trace: list[TraceRecord]
    fractional: Optional[FractionalSolution]
    fractional_fraction: float
    rounding_fallback: bool
    state: Optional[DWState]
    seconds: dict[str, float]


def run(state: DWState, callback: Callable[[DWState], None] | None = None) -> DWState:
    """Iterate until convergence or the iteration cap."""
    cfg = state.config
    if callback is not None:
        callback(state)
    while not state.converged and state.iteration < cfg.max_iters:
        before = len(state.trace)
        iterate(state)
        if cfg.purge_after_seconds is not None and not state.converged:
            purge_nonbasic(state, cfg.purge_after_seconds)
        if callback is not None and len(state.trace) > before:
            callback(state)
    if not state.converged and state.iteration >= cfg.max_iters:
        log.info("column generation stopped at the iteration cap (%d)", cfg.max_iters)
    return state


def solve_dw(
    g: Graph,
    side_constraints: Sequence[SideConstraint] = (),
    config: DWConfig | None = None,
    pricer_factory: Callable[[list[Subprogram]], Pricer] | None = None,
    callback: Callable[[DWState], None] | None = None,
) -> DWResult:
    """Full pipeline: isolate degree-0 nodes, run column generation, round."""
    from dwmap.rounding import round_solution

    config = config or DWConfig()
    t_start = time.perf_counter()
    split = split_isolated(g)
    core = split.core
    constraints = remap(side_constraints, split.full_to_core)
    iso_value = split.isolated_value(g)

    if core.num_edges == 0:
        assignment = split.lift(g, [])
        total = time.perf_counter() - t_start
        return DWResult(assignment, log_score(g, assignment), iso_value, True, 0, [], None, 0.0, False, None,
                        {"total": total, "decomposition": 0.0, "rounding": 0.0})

    problem = prepare(core, constraints)
    pricer = pricer_factory(problem.subprograms) if pricer_factory else Pricer(problem.subprograms)
    try:
        state = start(problem, config, pricer)
        run(state, callback)
    finally:
        pricer.close()
    t_dw = time.perf_counter()
    frac = recover(state)
    rounded = round_solution(core, frac, constraints, config.round_eps, config.round_cap)
    t_round = time.perf_counter()
    assignment = split.lift(g, rounded.assignment)
    return DWResult(
        assignment=assignment,
        value=log_score(g, assignment),
        lp_objective=state.objective + iso_value,
        converged=state.converged,
        iterations=state.iteration,
        trace=state.trace,
        fractional=frac,
        fractional_fraction=rounded.fractional_fraction,
        rounding_fallback=rounded.fallback,
        state=state,
        seconds={"total": t_round - t_start, "decomposition": t_dw - t_start, "rounding": t_round - t_dw},
    )
