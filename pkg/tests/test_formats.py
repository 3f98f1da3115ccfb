import io
import math

import numpy as np
import pytest
from hypothesis import given

from dwmap.decomposition import TraceRecord, solve_dw
from dwmap.formats import (
    TRACE_FIELDS,
    ModelFormatError,
    dumps_native,
    emit_trace,
    loads_native,
    parse_uai,
    read_model,
    read_trace,
    trace_line,
)
from dwmap.instances import frustrated_triangle
from dwmap.model import Graph
from dwmap.sideconstraints import InjectiveConstraint, LinearConstraint
from strategies import graphs

PAIR = """MARKOV
2
2 2
1
2 0 1
4 0 1 1 0
"""


def test_pairwise_clique():
    g = parse_uai(PAIR)
    assert g.cardinalities == (2, 2)
    assert g.edges == ((0, 1),)
    np.testing.assert_array_equal(g.pairwise_potentials[0], [[0, 1], [1, 0]])


def test_unary_clique():
    g = parse_uai("MARKOV\n1\n2\n1\n1 0\n2 1 0\n")
    np.testing.assert_array_equal(g.local_potentials[0], [1, 0])


def test_rectangular_table_is_row_major():
    g = parse_uai("MARKOV 2 2 3 1 2 0 1 6 0 1 2 3 4 5")
    np.testing.assert_array_equal(g.pairwise_potentials[0], [[0, 1, 2], [3, 4, 5]])


def test_arity_error_has_position():
    with pytest.raises(ModelFormatError, match=r"line 5, column 1: clique 0 has arity 3"):
        parse_uai("MARKOV\n3\n2 2 2\n1\n3 0 1 2\n")


def test_table_length_mismatch():
    with pytest.raises(ModelFormatError, match=r"line 6, column 1: .*3 entries, expected 4"):
        parse_uai(PAIR.replace("4 0 1 1 0", "3 0 1 1"))


def test_non_numeric_token():
    with pytest.raises(ModelFormatError, match=r"line 6, column 5: expected number .*'x'"):
        parse_uai(PAIR.replace("4 0 1 1 0", "4 0 x 1 0"))


@pytest.mark.parametrize(
    "text, message",
    [
        ("BAYES 1 2 0", "MARKOV"),
        ("MARKOV 2 2", "end of file"),
        ("MARKOV 1 2 1 1 3", "out of range"),
        ("MARKOV 2 2 2 1 2 0 0", "repeats"),
        (PAIR + " 7", "trailing"),
        ("MARKOV 1 0 0", "positive"),
    ],
)
def test_malformed(text, message):
    with pytest.raises(ModelFormatError, match=message):
        parse_uai(text)


def test_linear_mode_takes_logs_with_floor():
    g = parse_uai("MARKOV 1 3 1 1 0 3 1 2.718281828459045 0", log_domain=False)
    np.testing.assert_allclose(g.local_potentials[0], [0.0, 1.0, math.log(1e-300)])
    with pytest.raises(ModelFormatError, match="negative"):
        parse_uai("MARKOV 1 2 1 1 0 2 1 -1", log_domain=False)


def test_duplicate_and_reversed_cliques_are_summed():
    text = "MARKOV 2 2 3 3 2 0 1 2 1 0 1 0 6 0 1 2 3 4 5 6 10 20 30 40 50 60 2 1 1"
    g = parse_uai(text)
    assert g.edges == ((0, 1),)
    # second table has scope (1, 0) with shape 3x2, transposed onto (0, 1)
    np.testing.assert_array_equal(g.pairwise_potentials[0], [[10, 31, 52], [23, 44, 65]])
    np.testing.assert_array_equal(g.local_potentials[0], [1, 1])


def test_native_round_trip_with_constraints():
    g = frustrated_triangle()
    rules = [InjectiveConstraint((0, 2), 1), LinearConstraint(((0, 1, 2.5), (1, 0, -1.0)), ">=", 0.5)]
    g2, rules2 = loads_native(dumps_native(g, rules))
    assert g2 == g
    assert rules2 == rules


@given(graphs(max_nodes=6, max_states=4))
def test_native_round_trip_is_exact(g):
    g2, rules = loads_native(dumps_native(g))
    assert g2 == g and rules == []


def test_native_errors():
    with pytest.raises(ModelFormatError, match="line 1"):
        loads_native("{oops")
    with pytest.raises(ModelFormatError, match="not a"):
        loads_native('{"format": "other"}')
    with pytest.raises(ModelFormatError, match="missing"):
        loads_native('{"format": "dwmap-model", "version": 1}')
    with pytest.raises(ModelFormatError, match="kind"):
        loads_native(dumps_native(frustrated_triangle()).replace('"side_constraints": []',
                                                                 '"side_constraints": [{"kind": "soft"}]'))


def test_read_model_detects_format(tmp_path):
    (tmp_path / "m.uai").write_text(PAIR)
    (tmp_path / "m.json").write_text(dumps_native(frustrated_triangle(), [InjectiveConstraint()]))
    assert read_model(tmp_path / "m.uai")[0].num_nodes == 2
    g, rules = read_model(tmp_path / "m.json")
    assert g == frustrated_triangle() and rules == [InjectiveConstraint()]
    with pytest.raises(ModelFormatError):
        read_model(tmp_path / "m.uai", fmt="xml")


def test_trace_lines():
    r = solve_dw(frustrated_triangle())
    buf = io.StringIO()
    assert emit_trace(r.trace, buf) == len(r.trace)
    rows = read_trace(buf.getvalue().splitlines())
    assert [tuple(row) for row in rows] == [TRACE_FIELDS] * len(r.trace)
    objs = [row["objective"] for row in rows]
    assert objs == sorted(objs)
    assert objs[-1] == 3.0


def test_trace_keeps_full_precision():
    rec = TraceRecord(0, 0.1 + 0.2, 1, 1, 1 / 3, 0.0)
    assert read_trace([trace_line(rec)])[0]["objective"] == 0.1 + 0.2


def test_single_record_when_start_is_optimal():
    g = Graph((2, 2), ((0, 1),), (np.array([1.0, 0.0]), np.array([2.0, 0.0])), (np.zeros((2, 2)),))
    assert len(solve_dw(g).trace) == 1
