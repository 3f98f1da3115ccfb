"""Primal revised simplex with bounded variables and a two-phase start.

Problems are maximizations in the form of :class:`~dwmap.relaxation.DenseLP`.
Internally every variable is shifted to ``0 <= x <= u``, inequality rows get a
slack, rows with a negative right-hand side are negated and artificials are
added only where no slack can start the basis.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from dwmap.relaxation import ConstraintSystem, DenseLP

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration-limit"
    NUMERICAL = "numerical"


class MasterError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimplexOptions:
    tol: float = 1e-9
    pivot_tol: float = 1e-11
    pivot_rule: str = "dantzig"
    # ratio-test tie break outside Bland mode: "max-pivot" or "lowest-row"
    ratio_tie: str = "max-pivot"
    # consecutive degenerate pivots before switching to Bland; None disables the fallback
    bland_after: int | None = 50
    max_iter: int = 100_000
    refactor_every: int = 100

    def __post_init__(self) -> None:
        if self.pivot_rule not in ("dantzig", "bland"):
            raise ValueError(f"unknown pivot rule {self.pivot_rule!r}")
        if self.ratio_tie not in ("max-pivot", "lowest-row"):
            raise ValueError(f"unknown ratio tie rule {self.ratio_tie!r}")


@dataclass
class LPSolution:
    status: Status
    primal: np.ndarray
    duals_eq: np.ndarray
    duals_ub: np.ndarray
    objective: float
    basis: np.ndarray
    iterations: int
    reduced_costs: np.ndarray
    dual_objective: float = float("nan")
    bland_pivots: int = 0

    @property
    def duals(self) -> np.ndarray:
        return np.concatenate([self.duals_eq, self.duals_ub])

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _Tableau:
    def __init__(self, a, b, u, basis, options: SimplexOptions):
        self.a = a
        self.b = b
        self.u = u
        self.m, self.n = a.shape
        self.opts = options
        self.basis = np.asarray(basis, dtype=np.int64)
        self.is_basic = np.zeros(self.n, dtype=bool)
        self.is_basic[self.basis] = True
        self.at_upper = np.zeros(self.n, dtype=bool)
        self.x = np.zeros(self.n)
        self.iterations = 0
        self.bland_pivots = 0
        self._since_refactor = 0
        self.refactor()

    def refactor(self) -> None:
        bmat = self.a[:, self.basis]
        self.binv = np.linalg.inv(bmat) if self.m else np.zeros((0, 0))
        nonbasic_val = np.where(self.at_upper, self.u, 0.0)
        nonbasic_val[self.is_basic] = 0.0
        self.x = nonbasic_val
        self.x[self.basis] = self.binv @ (self.b - self.a @ nonbasic_val)
        self._since_refactor = 0

    def reduced_costs(self, c):
        y = c[self.basis] @ self.binv
        d = c - y @ self.a
        d[self.basis] = 0.0
        return y, d

    def run(self, c, allowed) -> Status:
        opts = self.opts
        tol = opts.tol
        base_bland = opts.pivot_rule == "bland"
        bland = base_bland
        streak = 0
        rechecked = False
        while True:
            if self.iterations >= opts.max_iter:
                return Status.ITERATION_LIMIT
            _, d = self.reduced_costs(c)
            up = ~self.at_upper & (d > tol) & (self.u > 0)
            down = self.at_upper & (d < -tol)
            cand = (up | down) & allowed & ~self.is_basic
            if not cand.any():
                if rechecked or self._since_refactor == 0:
                    return Status.OPTIMAL
                # confirm optimality on a fresh factorization
                self.refactor()
                rechecked = True
                continue
            rechecked = False
            if bland:
                j = int(np.flatnonzero(cand)[0])
            else:
                j = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
            w = self.binv @ self.a[:, j]
            sigma = 1.0 if not self.at_upper[j] else -1.0
            delta = sigma * w
            xb = self.x[self.basis]
            ub = self.u[self.basis]
            ratios = np.full(self.m, np.inf)
            dec = delta > opts.pivot_tol
            ratios[dec] = np.maximum(xb[dec], 0.0) / delta[dec]
            inc = (delta < -opts.pivot_tol) & np.isfinite(ub)
            ratios[inc] = np.maximum(ub[inc] - xb[inc], 0.0) / -delta[inc]
            t_row = ratios.min() if self.m else np.inf
            t_flip = self.u[j]
            if not np.isfinite(t_row) and not np.isfinite(t_flip):
                return Status.UNBOUNDED

            self.iterations += 1
            if bland:
                self.bland_pivots += 1
            if t_flip <= t_row:
                step = t_flip
                self.x[self.basis] = xb - sigma * step * w
                self.at_upper[j] = not self.at_upper[j]
                self.x[j] = self.u[j] if self.at_upper[j] else 0.0
            else:
                ties = np.flatnonzero(ratios <= t_row + 1e-12 * (1.0 + t_row))
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                elif opts.ratio_tie == "lowest-row":
                    r = int(ties[0])
                else:
                    r = int(ties[np.argmax(np.abs(delta[ties]))])
                step = ratios[r]
                leaving = int(self.basis[r])
                to_upper = bool(delta[r] < 0)
                self.x[self.basis] = xb - sigma * step * w
                self.x[j] = self.x[j] + sigma * step
                self.x[leaving] = self.u[leaving] if to_upper else 0.0
                self.at_upper[leaving] = to_upper
                self.at_upper[j] = False
                self.is_basic[leaving] = False
                self.is_basic[j] = True
                self.basis[r] = j
                pivot_row = self.binv[r] / w[r]
                self.binv -= np.outer(w, pivot_row)
                self.binv[r] = pivot_row
                self._since_refactor += 1
                if self._since_refactor >= opts.refactor_every:
                    self.refactor()

            if step <= tol:
                streak += 1
                if opts.bland_after is not None and streak >= opts.bland_after:
                    bland = True
            else:
                streak = 0
                bland = base_bland


def solve_lp(lp: DenseLP, options: SimplexOptions | None = None) -> LPSolution:
    """Solve ``lp`` and return primal values, row duals and a status."""
    opts = options or SimplexOptions()
    c0 = np.asarray(lp.objective, dtype=float)
    n = c0.size
    lo = np.asarray(lp.lower, dtype=float)
    hi = np.asarray(lp.upper, dtype=float)
    if not np.all(np.isfinite(lo)):
        raise ValueError("lower bounds must be finite")
    a_eq = np.asarray(lp.a_eq, dtype=float)
    a_ub = np.asarray(lp.a_ub, dtype=float)
    m_eq, m_ub = a_eq.shape[0], a_ub.shape[0]
    m = m_eq + m_ub

    a = np.zeros((m, n + m_ub))
    a[:m_eq, :n] = a_eq
    a[m_eq:, :n] = a_ub
    a[m_eq:, n:] = np.eye(m_ub)
    b = np.concatenate([lp.b_eq, lp.b_ub]).astype(float) - a[:, :n] @ lo
    flip = b < 0
    a[flip] *= -1.0
    b[flip] *= -1.0

    basis = np.empty(m, dtype=np.int64)
    needs_art = []
    for r in range(m):
        if r >= m_eq and not flip[r]:
            basis[r] = n + (r - m_eq)
        else:
            needs_art.append(r)
    n_art = len(needs_art)
    if n_art:
        art = np.zeros((m, n_art))
        art[needs_art, np.arange(n_art)] = 1.0
        a = np.hstack([a, art])
        basis[needs_art] = n + m_ub + np.arange(n_art)
    n_total = a.shape[1]
    u = np.concatenate([hi - lo, np.full(m_ub + n_art, np.inf)])
    c = np.concatenate([c0, np.zeros(m_ub + n_art)])
    is_art = np.zeros(n_total, dtype=bool)
    is_art[n + m_ub :] = True

    def finish(status: Status, tab: _Tableau | None) -> LPSolution:
        if tab is None:
            x = lo.copy()
            basis_out = np.zeros(0, dtype=np.int64)
            y = np.zeros(m)
            d = c0.copy()
            iters = bland = 0
        else:
            x = tab.x[:n] + lo
            basis_out = tab.basis.copy()
            y, dfull = tab.reduced_costs(c)
            d = dfull[:n]
            iters, bland = tab.iterations, tab.bland_pivots
        y = np.where(flip, -y, y)
        objective = float(c0 @ x) if status is not Status.INFEASIBLE else float("nan")
        dual_obj = float("nan")
        if status is Status.OPTIMAL and tab is not None:
            nonbasic = ~tab.is_basic[:n]
            upper = nonbasic & tab.at_upper[:n]
            lower = nonbasic & ~tab.at_upper[:n]
            b_orig = np.concatenate([lp.b_eq, lp.b_ub])
            dual_obj = float(b_orig @ y + d[upper] @ hi[upper] + d[lower] @ lo[lower])
        return LPSolution(status, x, y[:m_eq], y[m_eq:], objective, basis_out, iters, d, dual_obj, bland)

    try:
        tab = _Tableau(a, b, u, basis, opts)
    except np.linalg.LinAlgError:
        return finish(Status.NUMERICAL, None)

    scale = max(1.0, float(np.max(np.abs(b))) if m else 1.0)
    try:
        if n_art:
            status = tab.run(-is_art.astype(float), np.ones(n_total, dtype=bool))
            if status is not Status.OPTIMAL:
                return finish(status, tab)
            tab.refactor()
            if float(tab.x[is_art].sum()) > opts.tol * scale * max(1, n_art):
                return finish(Status.INFEASIBLE, tab)
            tab.u[is_art] = 0.0
            tab.x[is_art & ~tab.is_basic] = 0.0
        status = tab.run(c, ~is_art)
        if status is Status.OPTIMAL:
            tab.refactor()
            xb = tab.x[tab.basis]
            ub = tab.u[tab.basis]
            slack = opts.tol * scale * 100
            if np.any(xb < -slack) or np.any(xb > ub + slack):
                log.warning("simplex: basic solution violates bounds after refactorization")
                return finish(Status.NUMERICAL, tab)
            np.clip(tab.x, 0.0, tab.u, out=tab.x)
    except np.linalg.LinAlgError:
        return finish(Status.NUMERICAL, tab)
    return finish(status, tab)


@dataclass
class MasterSolution:
    lp: LPSolution
    alpha: np.ndarray
    pi: np.ndarray  # one multiplier per constraint-system row
    gamma: np.ndarray  # one multiplier per edge (convexity rows)
    basic_columns: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def objective(self) -> float:
        return self.lp.objective

    @property
    def status(self) -> Status:
        return self.lp.status


def solve_restricted_master(
    columns: Sequence,
    system: ConstraintSystem,
    options: SimplexOptions | None = None,
) -> MasterSolution:
    """Build and solve the restricted master over the convexity weights.

    ``columns`` need ``edge``, ``cost``, ``rows`` and ``values`` attributes;
    ``rows``/``values`` are the sparse constraint column.
    """
    num_edges = system.num_edges
    has_column = np.zeros(num_edges, dtype=bool)
    for col in columns:
        has_column[col.edge] = True
    if not has_column.all():
        missing = np.flatnonzero(~has_column).tolist()
        raise MasterError(f"edges without any column in the master: {missing}")

    n = len(columns)
    senses = system.senses()
    eq_ids = [r for r, sense in enumerate(senses) if sense == "="]
    ub_ids = [r for r, sense in enumerate(senses) if sense != "="]
    eq_pos = {r: i for i, r in enumerate(eq_ids)}
    ub_pos = {r: i for i, r in enumerate(ub_ids)}
    ub_sign = np.array([1.0 if senses[r] == "<=" else -1.0 for r in ub_ids])

    a_eq = np.zeros((len(eq_ids) + num_edges, n))
    a_ub = np.zeros((len(ub_ids), n))
    g = np.empty(n)
    for j, col in enumerate(columns):
        g[j] = col.cost
        for r, v in zip(np.asarray(col.rows).tolist(), np.asarray(col.values).tolist()):
            if r in eq_pos:
                a_eq[eq_pos[r], j] += v
            else:
                i = ub_pos[r]
                a_ub[i, j] += ub_sign[i] * v
        a_eq[len(eq_ids) + col.edge, j] = 1.0
    rhs = system.rhs()
    b_eq = np.concatenate([rhs[eq_ids], np.ones(num_edges)])
    b_ub = rhs[ub_ids] * ub_sign if ub_ids else np.zeros(0)
    lp = DenseLP(g, a_eq, b_eq, a_ub, b_ub, np.zeros(n), np.full(n, np.inf))
    sol = solve_lp(lp, options)

    pi = np.zeros(system.num_rows)
    if eq_ids:
        pi[eq_ids] = sol.duals_eq[: len(eq_ids)]
    if ub_ids:
        pi[ub_ids] = sol.duals_ub * ub_sign
    gamma = sol.duals_eq[len(eq_ids) :]
    basic = np.sort(sol.basis[sol.basis < n]) if sol.basis.size else np.zeros(0, dtype=np.int64)
    return MasterSolution(sol, sol.primal.copy(), pi, gamma, basic)
