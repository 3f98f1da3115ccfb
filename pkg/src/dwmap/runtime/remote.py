"""Remote pricing workers over TCP.

The coordinator listens, workers connect and say HELLO, then receive the
cost vectors and constraint blocks of their edges once (EDGE_DATA). Every
iteration afterwards only multipliers go out (PRICE_REQUEST) and column
summaries come back (PRICE_REPLY).
"""

from __future__ import annotations

import logging
import socket
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from dwmap.decomposition import Column, Duals, Pricer, Subprogram, price_block
from dwmap.relaxation import EdgeBlock
from dwmap.runtime.pool import WorkPartition, partition_edges
from dwmap.runtime.protocol import (
    HEADER_SIZE,
    EdgeData,
    EdgeEntry,
    ErrorMessage,
    Hello,
    PricedEdge,
    PriceReply,
    PriceRequest,
    ProtocolError,
    Shutdown,
    read_frame,
    write_frame,
)

log = logging.getLogger(__name__)


class RemoteError(RuntimeError):
    pass


def parse_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must look like host:port, got {address!r}")
    return host, int(port)


def edge_entry(sub: Subprogram) -> EdgeEntry:
    m = sub.block.matrix
    return EdgeEntry(sub.edge, np.asarray(sub.cost), sub.block.row_ids, m.indptr, m.indices, m.data)


def subprogram_from_entry(entry: EdgeEntry) -> Subprogram:
    k = entry.cost.size
    matrix = sp.csc_matrix((entry.data, entry.indices, entry.indptr), shape=(entry.row_ids.size, k))
    return Subprogram(entry.edge, entry.cost, EdgeBlock(entry.edge, entry.row_ids, matrix))


def request_size(num_rows: int, num_edges: int) -> int:
    """Exact frame size of a PRICE_REQUEST carrying ``num_rows`` multipliers."""
    return HEADER_SIZE + 4 + 1 + 4 + 12 * num_rows + 4 + 12 * num_edges


def reply_size(column_nnz: Sequence[int]) -> int:
    """Exact frame size of a PRICE_REPLY for columns with the given nonzero counts."""
    return HEADER_SIZE + 4 + 4 + sum(28 + 12 * k for k in column_nnz)


def price_request_for(subs: Sequence[Subprogram], duals: Duals, tie_rule: str, iteration: int) -> PriceRequest:
    rows = np.unique(np.concatenate([s.block.row_ids for s in subs])) if subs else np.zeros(0, np.int64)
    edges = np.array([s.edge for s in subs], dtype=np.int64)
    return PriceRequest(iteration, tie_rule, rows, duals.pi[rows], edges, duals.gamma[edges])


def answer(request: PriceRequest, store: dict[int, Subprogram]) -> PriceReply:
    """Price every stored edge named in the request."""
    pi = dict(zip(request.pi_rows.tolist(), request.pi_values.tolist()))
    entries = []
    for e, gamma in zip(request.gamma_edges.tolist(), request.gamma_values.tolist()):
        sub = store[e]
        pi_block = np.array([pi[r] for r in sub.block.row_ids.tolist()], dtype=float)
        col, rc = price_block(sub, pi_block, gamma, request.tie_rule, request.iteration)
        entries.append(PricedEdge(col.edge, col.index, col.cost, rc, col.rows, col.values))
    return PriceReply(request.iteration, entries)


def run_worker(address: str, name: str = "worker", timeout: float | None = None) -> int:
    """Connect to a coordinator and serve pricing requests until SHUTDOWN.

    Returns the number of requests answered.
    """
    host, port = parse_address(address)
    store: dict[int, Subprogram] = {}
    served = 0
    with socket.create_connection((host, port), timeout=timeout) as sock:
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        write_frame(sock, Hello(name))
        while True:
            try:
                msg, _ = read_frame(sock)
            except ProtocolError as exc:
                log.error("worker %s: %s; closing connection", name, exc)
                return served
            if isinstance(msg, EdgeData):
                for entry in msg.entries:
                    store[entry.edge] = subprogram_from_entry(entry)
            elif isinstance(msg, PriceRequest):
                try:
                    reply = answer(msg, store)
                except KeyError as exc:
                    write_frame(sock, ErrorMessage(1, f"edge {exc.args[0]} was never shipped"))
                    continue
                write_frame(sock, reply)
                served += 1
            elif isinstance(msg, Shutdown):
                return served
            else:
                write_frame(sock, ErrorMessage(2, f"unexpected {type(msg).__name__}"))
                return served


@dataclass
class _Link:
    sock: socket.socket
    name: str
    edges: list[int] = field(default_factory=list)
    alive: bool = True


class Coordinator:
    """Listening side; accepts workers and hands out a :class:`RemotePricer`."""

    def __init__(self, address: str | tuple[str, int] = ("127.0.0.1", 0)):
        host, port = parse_address(address) if isinstance(address, str) else address
        self._server = socket.create_server((host, port))
        self.address = self._server.getsockname()[:2]

    def accept(self, count: int, timeout: float | None = 60.0) -> list[_Link]:
        links = []
        self._server.settimeout(timeout)
        for _ in range(count):
            try:
                sock, _ = self._server.accept()
            except socket.timeout:
                raise RemoteError(f"only {len(links)} of {count} workers connected") from None
            sock.settimeout(timeout)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            msg, _ = read_frame(sock)
            if not isinstance(msg, Hello):
                sock.close()
                raise RemoteError(f"expected HELLO, got {type(msg).__name__}")
            links.append(_Link(sock, msg.name))
        return links

    def pricer(self, subprograms: Sequence[Subprogram], workers: int, timeout: float | None = 60.0) -> "RemotePricer":
        return RemotePricer(subprograms, self.accept(workers, timeout))

    def close(self) -> None:
        self._server.close()


class RemotePricer(Pricer):
    """Prices edges on connected workers; merges replies in edge-id order.

    ``bytes_tx``/``bytes_rx`` count pricing traffic only; the one-off edge
    shipment is tracked in ``setup_bytes``.
    """

    def __init__(self, subprograms: Sequence[Subprogram], links: list[_Link]):
        super().__init__(subprograms)
        if not links:
            raise RemoteError("no workers connected")
        self.links = links
        self.partition: WorkPartition = partition_edges([s.cost.size for s in self.subprograms], len(links))
        self.setup_bytes = 0
        self.retries = 0
        for link, block in zip(self.links, self.partition.blocks):
            self._ship(link, list(block))
        for link in self.links[self.partition.num_workers :]:
            link.edges = []
        self._io = ThreadPoolExecutor(max_workers=len(links), thread_name_prefix="dwmap-remote")

    def _ship(self, link: _Link, edges: list[int]) -> None:
        if edges:
            self.setup_bytes += write_frame(link.sock, EdgeData([edge_entry(self.subprograms[e]) for e in edges]))
        link.edges.extend(edges)

    def _exchange(self, link: _Link, edges: list[int], duals: Duals, tie_rule: str, iteration: int):
        request = price_request_for([self.subprograms[e] for e in edges], duals, tie_rule, iteration)
        sent = write_frame(link.sock, request)
        reply, received = read_frame(link.sock)
        if isinstance(reply, ErrorMessage):
            raise RemoteError(f"worker {link.name}: {reply.message}")
        if not isinstance(reply, PriceReply) or reply.iteration != iteration:
            raise RemoteError(f"worker {link.name} answered out of turn")
        return reply, sent, received

    def price_all(self, duals: Duals, tie_rule: str, iteration: int) -> list[tuple[Column, float]]:
        pending = {id(link): (link, list(link.edges)) for link in self.links if link.alive and link.edges}
        priced: dict[int, tuple[Column, float]] = {}
        while pending:
            jobs = list(pending.values())
            futures = [
                self._io.submit(self._exchange, link, edges, duals, tie_rule, iteration) for link, edges in jobs
            ]
            pending = {}
            orphaned: list[int] = []
            for (link, edges), fut in zip(jobs, futures):
                try:
                    reply, sent, received = fut.result()
                except (OSError, ProtocolError, RemoteError) as exc:
                    log.warning("worker %s failed (%s); re-shipping %d edges", link.name, exc, len(edges))
                    link.alive = False
                    link.edges = []
                    orphaned.extend(edges)
                    continue
                self.bytes_tx += sent
                self.bytes_rx += received
                for p in reply.entries:
                    col = Column(p.edge, p.index, p.cost, p.rows, p.values, iteration)
                    priced[p.edge] = (col, p.reduced_cost)
            if orphaned:
                alive = [link for link in self.links if link.alive]
                if not alive:
                    raise RemoteError(f"edges {sorted(orphaned)} cannot be priced: no live workers")
                self.retries += 1
                target = min(alive, key=lambda link: len(link.edges))
                try:
                    self._ship(target, sorted(orphaned))
                except OSError as exc:
                    target.alive = False
                    raise RemoteError(f"re-shipping edges to {target.name} failed: {exc}") from exc
                pending[id(target)] = (target, sorted(orphaned))
        return [priced[e] for e in range(len(self.subprograms))]

    def close(self) -> None:
        for link in self.links:
            if link.alive:
                try:
                    write_frame(link.sock, Shutdown())
                except OSError:
                    pass
            link.sock.close()
        self._io.shutdown(wait=True)
