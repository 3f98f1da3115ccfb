"""Model files (UAI MARKOV and the native JSON format) and trace records."""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from dwmap.model import Graph
from dwmap.sideconstraints import InjectiveConstraint, LinearConstraint, SideConstraint

NATIVE_FORMAT = "dwmap-model"
NATIVE_VERSION = 1
ZERO_FLOOR = 1e-300

TRACE_FIELDS = ("iter", "objective", "columns_added", "pool_size", "master_ms", "pricing_ms", "bytes_tx", "bytes_rx")


class ModelFormatError(ValueError):
    pass


class _Tokens:
    def __init__(self, text: str):
        self.items: list[tuple[str, int, int]] = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            for m in re.finditer(r"\S+", line):
                self.items.append((m.group(), lineno, m.start() + 1))
        self.pos = 0

    def _next(self, what: str) -> tuple[str, int, int]:
        if self.pos >= len(self.items):
            raise ModelFormatError(f"unexpected end of file while reading {what}")
        tok = self.items[self.pos]
        self.pos += 1
        return tok

    def word(self, what: str) -> tuple[str, int, int]:
        return self._next(what)

    def int(self, what: str) -> tuple[int, int, int]:
        tok, line, col = self._next(what)
        try:
            return int(tok), line, col
        except ValueError:
            raise ModelFormatError(f"line {line}, column {col}: expected integer {what}, got {tok!r}") from None

    def float(self, what: str) -> tuple[float, int, int]:
        tok, line, col = self._next(what)
        try:
            return float(tok), line, col
        except ValueError:
            raise ModelFormatError(f"line {line}, column {col}: expected number {what}, got {tok!r}") from None

    def remaining(self) -> tuple[str, int, int] | None:
        return self.items[self.pos] if self.pos < len(self.items) else None


def parse_uai(text: str, log_domain: bool = True, zero_floor: float = ZERO_FLOOR) -> Graph:
    """Parse a UAI ``MARKOV`` network with cliques of arity at most two.

    In log mode table entries are taken as additive scores; otherwise they are
    probabilities/factors and mapped through ``log(max(v, zero_floor))``.
    Repeated cliques over the same scope are added up.
    """
    toks = _Tokens(text)
    head, line, col = toks.word("header")
    if head.upper() != "MARKOV":
        raise ModelFormatError(f"line {line}, column {col}: expected MARKOV header, got {head!r}")
    n, line, col = toks.int("variable count")
    if n < 0:
        raise ModelFormatError(f"line {line}, column {col}: negative variable count")
    cards = []
    for v in range(n):
        k, line, col = toks.int(f"cardinality of variable {v}")
        if k < 1:
            raise ModelFormatError(f"line {line}, column {col}: cardinality must be positive")
        cards.append(k)
    n_cliques, line, col = toks.int("clique count")
    scopes = []
    for c in range(n_cliques):
        size, line, col = toks.int(f"size of clique {c}")
        if size > 2:
            raise ModelFormatError(f"line {line}, column {col}: clique {c} has arity {size}; only pairwise models are supported")
        scope = []
        for _ in range(size):
            v, vline, vcol = toks.int(f"variable of clique {c}")
            if not 0 <= v < n:
                raise ModelFormatError(f"line {vline}, column {vcol}: variable {v} out of range")
            scope.append(v)
        if len(set(scope)) != len(scope):
            raise ModelFormatError(f"line {line}, column {col}: clique {c} repeats a variable")
        scopes.append(tuple(scope))

    local = [np.zeros(k) for k in cards]
    pair: dict[frozenset, tuple[tuple[int, int], np.ndarray]] = {}
    order: list[frozenset] = []
    for c, scope in enumerate(scopes):
        count, line, col = toks.int(f"table size of clique {c}")
        expected = math.prod(cards[v] for v in scope)
        if count != expected:
            raise ModelFormatError(f"line {line}, column {col}: table of clique {c} has {count} entries, expected {expected}")
        values = np.empty(count)
        for i in range(count):
            v, vline, vcol = toks.float(f"entry {i} of clique {c}")
            if not log_domain:
                if v < 0:
                    raise ModelFormatError(f"line {vline}, column {vcol}: negative factor value {v}")
                v = math.log(max(v, zero_floor))
            if not math.isfinite(v):
                raise ModelFormatError(f"line {vline}, column {vcol}: non-finite value")
            values[i] = v
        if len(scope) == 1:
            local[scope[0]] += values
        elif len(scope) == 2:
            s, t = scope
            table = values.reshape(cards[s], cards[t])
            key = frozenset(scope)
            if key not in pair:
                pair[key] = ((s, t), table.copy())
                order.append(key)
            else:
                (s0, _), acc = pair[key]
                acc += table if s0 == s else table.T
    extra = toks.remaining()
    if extra is not None:
        tok, line, col = extra
        raise ModelFormatError(f"line {line}, column {col}: unexpected trailing token {tok!r}")
    edges = tuple(pair[k][0] for k in order)
    tables = tuple(pair[k][1] for k in order)
    return Graph(tuple(cards), edges, tuple(local), tables)


def constraint_to_dict(sc: SideConstraint) -> dict:
    if isinstance(sc, InjectiveConstraint):
        return {"kind": "injective", "nodes": None if sc.nodes is None else list(sc.nodes), "outlier_state": sc.outlier_state}
    return {"kind": "linear", "terms": [list(t) for t in sc.terms], "sense": sc.sense, "rhs": sc.rhs}


def constraint_from_dict(d: dict) -> SideConstraint:
    kind = d.get("kind")
    if kind == "injective":
        nodes = d.get("nodes")
        return InjectiveConstraint(None if nodes is None else tuple(int(s) for s in nodes), d.get("outlier_state"))
    if kind == "linear":
        return LinearConstraint(tuple(tuple(t) for t in d["terms"]), d["sense"], float(d["rhs"]))
    raise ModelFormatError(f"unknown side constraint kind {kind!r}")


def model_to_dict(g: Graph, constraints: Sequence[SideConstraint] = ()) -> dict:
    return {
        "format": NATIVE_FORMAT,
        "version": NATIVE_VERSION,
        "cardinalities": list(g.cardinalities),
        "edges": [list(e) for e in g.edges],
        "local_potentials": [phi.tolist() for phi in g.local_potentials],
        "pairwise_potentials": [phi.tolist() for phi in g.pairwise_potentials],
        "side_constraints": [constraint_to_dict(c) for c in constraints],
    }


def model_from_dict(d: dict) -> tuple[Graph, list[SideConstraint]]:
    if d.get("format") != NATIVE_FORMAT:
        raise ModelFormatError(f"not a {NATIVE_FORMAT} document")
    if d.get("version") != NATIVE_VERSION:
        raise ModelFormatError(f"unsupported native format version {d.get('version')!r}")
    try:
        g = Graph(
            tuple(d["cardinalities"]),
            tuple(tuple(e) for e in d["edges"]),
            tuple(np.asarray(phi, dtype=float) for phi in d["local_potentials"]),
            tuple(np.asarray(phi, dtype=float) for phi in d["pairwise_potentials"]),
        )
    except KeyError as exc:
        raise ModelFormatError(f"missing field {exc.args[0]!r}") from None
    return g, [constraint_from_dict(c) for c in d.get("side_constraints", [])]


def dumps_native(g: Graph, constraints: Sequence[SideConstraint] = ()) -> str:
    return json.dumps(model_to_dict(g, constraints), indent=1)


def loads_native(text: str) -> tuple[Graph, list[SideConstraint]]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return model_from_dict(doc)


def read_model(path: str | Path, fmt: str = "auto", log_domain: bool = True) -> tuple[Graph, list[SideConstraint]]:
    path = Path(path)
    text = path.read_text()
    if fmt == "auto":
        fmt = "native" if path.suffix.lower() == ".json" or text.lstrip().startswith("{") else "uai"
    if fmt == "uai":
        return parse_uai(text, log_domain), []
    if fmt == "native":
        return loads_native(text)
    raise ModelFormatError(f"unknown model format {fmt!r}")


def trace_line(record) -> str:
    """One JSON line per iteration; floats keep full precision."""
    d = asdict(record) if not isinstance(record, dict) else record
    return json.dumps({k: d[k] for k in TRACE_FIELDS})


def emit_trace(records: Iterable, out: IO[str]) -> int:
    n = 0
    for rec in records:
        out.write(trace_line(rec) + "\n")
        n += 1
    return n


def read_trace(lines: Iterable[str]) -> list[dict]:
    return [json.loads(line) for line in lines if line.strip()]
