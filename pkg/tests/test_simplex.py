from collections import namedtuple

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dwmap.relaxation import ConstraintRow, ConstraintSystem, DenseLP, RelaxationError
from dwmap.simplex import MasterError, SimplexOptions, Status, solve_lp, solve_restricted_master
from lpgen import BEALE, BEALE_OPTIMUM, highs, infeasible_fixtures, random_feasible_lp, unbounded_fixtures

Col = namedtuple("Col", "edge cost rows values")


def test_textbook_optimum():
    sol = solve_lp(DenseLP.build([1.0, 1.0], a_ub=[[1.0, 1.0]], b_ub=[1.0]))
    assert sol.status is Status.OPTIMAL
    assert sol.objective == pytest.approx(1.0)
    np.testing.assert_allclose(sol.duals_ub, [1.0])


@pytest.mark.parametrize("lp", infeasible_fixtures())
def test_infeasible(lp):
    assert solve_lp(lp).status is Status.INFEASIBLE


@pytest.mark.parametrize("lp", unbounded_fixtures())
def test_unbounded(lp):
    assert solve_lp(lp).status is Status.UNBOUNDED


def test_dimension_mismatch():
    with pytest.raises(RelaxationError):
        DenseLP(np.ones(2), np.ones((1, 3)), np.ones(1), np.zeros((0, 2)), np.zeros(0), np.zeros(2), np.ones(2))


def test_bad_options():
    with pytest.raises(ValueError):
        SimplexOptions(pivot_rule="steepest")


def test_beale_cycles_without_bland_and_terminates_with_it():
    lp = DenseLP.build(**BEALE)
    stuck = solve_lp(lp, SimplexOptions(ratio_tie="lowest-row", bland_after=None, max_iter=500))
    assert stuck.status is Status.ITERATION_LIMIT
    sol = solve_lp(lp, SimplexOptions(ratio_tie="lowest-row"))
    assert sol.status is Status.OPTIMAL
    assert sol.bland_pivots > 0
    assert sol.objective == pytest.approx(BEALE_OPTIMUM, abs=1e-9)


def test_pure_bland_rule_solves_beale():
    sol = solve_lp(DenseLP.build(**BEALE), SimplexOptions(pivot_rule="bland"))
    assert sol.objective == pytest.approx(BEALE_OPTIMUM, abs=1e-9)


def test_deterministic():
    lp = random_feasible_lp(np.random.default_rng(3))
    a, b = solve_lp(lp), solve_lp(lp)
    np.testing.assert_array_equal(a.primal, b.primal)
    np.testing.assert_array_equal(a.basis, b.basis)


@given(st.integers(0, 2**32 - 1))
def test_random_lp_against_highs(seed):
    lp = random_feasible_lp(np.random.default_rng(seed))
    ref = highs(lp)
    sol = solve_lp(lp)
    if ref.status == 3:
        assert sol.status is Status.UNBOUNDED
        return
    assert sol.status is Status.OPTIMAL
    np.testing.assert_allclose(sol.objective, -ref.fun, rtol=1e-7, atol=1e-7)
    np.testing.assert_allclose(sol.dual_objective, sol.objective, rtol=1e-7, atol=1e-7)
    x = sol.primal
    assert np.all(x >= lp.lower - 1e-9) and np.all(x <= lp.upper + 1e-9)
    np.testing.assert_allclose(lp.a_eq @ x, lp.b_eq, atol=1e-8)
    assert np.all(lp.a_ub @ x <= lp.b_ub + 1e-8)
    at_lower = (np.abs(x - lp.lower) < 1e-9) & ~np.isin(np.arange(lp.num_vars), sol.basis)
    assert np.all(sol.reduced_costs[at_lower] <= 1e-7)


def _system(edges=1, rows=()):
    return ConstraintSystem(tuple([4] * edges), tuple(rows))


def test_master_single_column():
    m = solve_restricted_master([Col(0, 3.0, [], [])], _system())
    assert m.objective == pytest.approx(3.0)
    np.testing.assert_allclose(m.alpha, [1.0])
    np.testing.assert_allclose(m.gamma, [3.0])
    assert m.pi.size == 0


def test_master_picks_better_vertex():
    m = solve_restricted_master([Col(0, 3.0, [], []), Col(0, 5.0, [], [])], _system())
    assert m.objective == pytest.approx(5.0)
    np.testing.assert_allclose(m.gamma, [5.0])


def test_master_identical_columns():
    one = solve_restricted_master([Col(0, 2.0, [], [])], _system())
    two = solve_restricted_master([Col(0, 2.0, [], []), Col(0, 2.0, [], [])], _system())
    assert two.objective == pytest.approx(one.objective)
    assert two.alpha.sum() == pytest.approx(1.0)


def test_master_missing_edge():
    with pytest.raises(MasterError, match=r"\[1\]"):
        solve_restricted_master([Col(0, 1.0, [], [])], _system(edges=2))


def test_master_duals_of_side_row():
    # edge 0 columns: cost 5 uses a capacity row, cost 1 does not; capacity 0.5
    row = ConstraintRow("side", "<=", 0.5, {0: (np.array([0]), np.array([1.0]))})
    cols = [Col(0, 5.0, [0], [1.0]), Col(0, 1.0, [], [])]
    m = solve_restricted_master(cols, _system(rows=[row]))
    assert m.objective == pytest.approx(3.0)
    np.testing.assert_allclose(m.pi, [4.0])
    np.testing.assert_allclose(m.gamma, [1.0])
