"""One entry point for every backend, shared by the CLI and the HTTP service."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

from dwmap.baselines import brute_force_map, max_product
from dwmap.decomposition import (
    DWConfig,
    DWState,
    Pricer,
    Subprogram,
    TraceRecord,
    fractional_from_edges,
    prepare,
    solve_dw,
)
from dwmap.model import Graph, log_score, split_isolated
from dwmap.relaxation import DEFAULT_VARIABLE_CAP, assemble_full_lp
from dwmap.rounding import round_solution
from dwmap.sideconstraints import InjectiveConstraint, SideConstraint, remap
from dwmap.simplex import Status, solve_lp

BACKENDS = ("dw", "direct-lp", "brute", "max-product")


class SolveError(RuntimeError):
    pass


@dataclass
class SolveResult:
    backend: str
    assignment: list[int]
    value: float
    lp_objective: Optional[float]
    converged: bool
    iterations: int
    fractional_fraction: Optional[float]
    many_to_one: Optional[int]
    rounding_fallback: bool
    seconds: dict[str, float]
    trace: list[TraceRecord] = field(default_factory=list)

    def record(self) -> dict:
        """Result record without the per-iteration trace."""
        out = asdict(self)
        out.pop("trace")
        return out


def many_to_one(assignment: Sequence[int], constraints: Sequence[SideConstraint]) -> Optional[int]:
    """Nodes sharing a non-outlier state with another node under an injective constraint."""
    injective = [c for c in constraints if isinstance(c, InjectiveConstraint)]
    if not injective:
        return None
    clashes = set()
    for c in injective:
        nodes = range(len(assignment)) if c.nodes is None else c.nodes
        by_state: dict[int, list[int]] = {}
        for s in nodes:
            if assignment[s] != c.outlier_state:
                by_state.setdefault(assignment[s], []).append(s)
        for members in by_state.values():
            if len(members) > 1:
                clashes.update(members)
    return len(clashes)


def _direct_lp(g: Graph, constraints: Sequence[SideConstraint], config: DWConfig, variable_cap: int) -> SolveResult:
    t0 = time.perf_counter()
    split = split_isolated(g)
    core_constraints = remap(constraints, split.full_to_core)
    iso_value = split.isolated_value(g)
    if split.core.num_edges == 0:
        assignment = split.lift(g, [])
        return SolveResult("direct-lp", assignment, log_score(g, assignment), iso_value, True, 0, 0.0,
                           many_to_one(assignment, constraints), False, {"total": time.perf_counter() - t0})
    problem = prepare(split.core, core_constraints)
    full = assemble_full_lp(split.core, problem.system, problem.costs, variable_cap)
    sol = solve_lp(full.lp, config.simplex)
    if sol.status is not Status.OPTIMAL:
        raise SolveError(f"direct LP ended with status {sol.status.value}")
    t_lp = time.perf_counter()
    frac = fractional_from_edges(split.core, full.split(sol.primal), problem.costs)
    rounded = round_solution(split.core, frac, core_constraints, config.round_eps, config.round_cap)
    assignment = split.lift(g, rounded.assignment)
    t_end = time.perf_counter()
    return SolveResult(
        "direct-lp", assignment, log_score(g, assignment), sol.objective + iso_value, True, sol.iterations,
        rounded.fractional_fraction, many_to_one(assignment, constraints), rounded.fallback,
        {"total": t_end - t0, "lp": t_lp - t0, "rounding": t_end - t_lp},
    )


def solve(
    g: Graph,
    backend: str = "dw",
    side_constraints: Sequence[SideConstraint] = (),
    config: DWConfig | None = None,
    pricer_factory: Callable[[list[Subprogram]], Pricer] | None = None,
    callback: Callable[[DWState], None] | None = None,
    variable_cap: int = DEFAULT_VARIABLE_CAP,
    damping: float = 0.0,
) -> SolveResult:
    config = config or DWConfig()
    constraints = list(side_constraints)
    if backend == "dw":
        r = solve_dw(g, constraints, config, pricer_factory, callback)
        return SolveResult(
            "dw", r.assignment, r.value, r.lp_objective, r.converged, r.iterations, r.fractional_fraction,
            many_to_one(r.assignment, constraints), r.rounding_fallback, r.seconds, r.trace,
        )
    if backend == "direct-lp":
        return _direct_lp(g, constraints, config, variable_cap)
    if backend == "brute":
        t0 = time.perf_counter()
        assignment, value = brute_force_map(g, constraints)
        return SolveResult("brute", assignment, value, None, True, 0, None, many_to_one(assignment, constraints),
                           False, {"total": time.perf_counter() - t0})
    if backend == "max-product":
        t0 = time.perf_counter()
        mp = max_product(g, config.max_iters, damping)
        return SolveResult("max-product", mp.assignment, log_score(g, mp.assignment), None, mp.converged,
                           mp.iterations, None, many_to_one(mp.assignment, constraints), False,
                           {"total": time.perf_counter() - t0})
    raise SolveError(f"unknown backend {backend!r}; choose from {', '.join(BACKENDS)}")
