"""Length-prefixed binary frames between the coordinator and pricing workers.

Frame layout (little-endian)::

    magic    8 bytes   b"DWLPMAP\\x00"
    version  u8
    type     u8
    length   u32       payload bytes
    payload

Payloads use fixed-width ``u32`` integers and ``f64`` floats only.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, fields
from typing import Union

import numpy as np

MAGIC = b"DWLPMAP\x00"
VERSION = 1
HEADER = struct.Struct("<8sBBI")
HEADER_SIZE = HEADER.size
MAX_FRAME_SIZE = 64 * 1024 * 1024

TIE_CODES = {"lowest-index": 0, "max-cost": 1}
TIE_NAMES = {v: k for k, v in TIE_CODES.items()}


class MessageType(enum.IntEnum):
    HELLO = 1
    EDGE_DATA = 2
    PRICE_REQUEST = 3
    PRICE_REPLY = 4
    SHUTDOWN = 5
    ERROR = 6


class ProtocolError(Exception):
    pass


class TruncatedFrameError(ProtocolError):
    pass


class BadMagicError(ProtocolError):
    pass


class VersionMismatchError(ProtocolError):
    pass


class OversizeFrameError(ProtocolError):
    pass


class UnknownMessageTypeError(ProtocolError):
    pass


class MalformedPayloadError(ProtocolError):
    pass


def _same(a, b) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.array_equal(np.asarray(a), np.asarray(b))
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    return a == b


class _Message:
    def __eq__(self, other: object) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return all(_same(getattr(self, f.name), getattr(other, f.name)) for f in fields(self))  # type: ignore[arg-type]


@dataclass(eq=False)
class Hello(_Message):
    name: str = ""


@dataclass(eq=False)
class EdgeEntry(_Message):
    edge: int
    cost: np.ndarray  # f64, edge size
    row_ids: np.ndarray  # global rows touching the edge
    indptr: np.ndarray  # CSC structure of the edge block
    indices: np.ndarray
    data: np.ndarray


@dataclass(eq=False)
class EdgeData(_Message):
    entries: list[EdgeEntry]


@dataclass(eq=False)
class PriceRequest(_Message):
    iteration: int
    tie_rule: str
    pi_rows: np.ndarray
    pi_values: np.ndarray
    gamma_edges: np.ndarray
    gamma_values: np.ndarray


@dataclass(eq=False)
class PricedEdge(_Message):
    edge: int
    index: int
    cost: float
    reduced_cost: float
    rows: np.ndarray
    values: np.ndarray


@dataclass(eq=False)
class PriceReply(_Message):
    iteration: int
    entries: list[PricedEdge]


@dataclass(eq=False)
class Shutdown(_Message):
    pass


@dataclass(eq=False)
class ErrorMessage(_Message):
    code: int
    message: str


Message = Union[Hello, EdgeData, PriceRequest, PriceReply, Shutdown, ErrorMessage]


class _Writer:
    def __init__(self) -> None:
        self.parts: list[bytes] = []

    def u8(self, v: int) -> None:
        self.parts.append(struct.pack("<B", v))

    def u32(self, v: int) -> None:
        self.parts.append(struct.pack("<I", v))

    def f64(self, v: float) -> None:
        self.parts.append(struct.pack("<d", v))

    def u32s(self, arr) -> None:
        a = np.asarray(arr)
        if a.size and (a.min() < 0 or a.max() > 0xFFFFFFFF):
            raise ValueError("integer out of u32 range")
        self.u32(a.size)
        self.parts.append(a.astype("<u4").tobytes())

    def f64s(self, arr) -> None:
        a = np.asarray(arr, dtype="<f8")
        self.u32(a.size)
        self.parts.append(a.tobytes())

    def text(self, s: str) -> None:
        raw = s.encode("utf-8")
        self.u32(len(raw))
        self.parts.append(raw)

    def bytes(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, buf: bytes) -> None:
        self.buf = memoryview(buf)
        self.pos = 0

    def _take(self, n: int) -> memoryview:
        if self.pos + n > len(self.buf):
            raise MalformedPayloadError("payload ended early")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def u32s(self) -> np.ndarray:
        n = self.u32()
        return np.frombuffer(self._take(4 * n), dtype="<u4").astype(np.int64)

    def f64s(self) -> np.ndarray:
        n = self.u32()
        return np.frombuffer(self._take(8 * n), dtype="<f8").astype(np.float64)

    def text(self) -> str:
        n = self.u32()
        try:
            return bytes(self._take(n)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedPayloadError("invalid utf-8 text") from exc

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise MalformedPayloadError(f"{len(self.buf) - self.pos} trailing payload bytes")


def _encode_payload(msg: Message) -> tuple[MessageType, bytes]:
    w = _Writer()
    if isinstance(msg, Hello):
        w.text(msg.name)
        return MessageType.HELLO, w.bytes()
    if isinstance(msg, EdgeData):
        w.u32(len(msg.entries))
        for e in msg.entries:
            w.u32(e.edge)
            w.f64s(e.cost)
            w.u32s(e.row_ids)
            w.u32s(e.indptr)
            w.u32s(e.indices)
            w.f64s(e.data)
        return MessageType.EDGE_DATA, w.bytes()
    if isinstance(msg, PriceRequest):
        if np.asarray(msg.pi_rows).size != np.asarray(msg.pi_values).size:
            raise ValueError("pi rows and values differ in length")
        if np.asarray(msg.gamma_edges).size != np.asarray(msg.gamma_values).size:
            raise ValueError("gamma edges and values differ in length")
        w.u32(msg.iteration)
        w.u8(TIE_CODES[msg.tie_rule])
        w.u32(np.asarray(msg.pi_rows).size)
        w.parts.append(np.asarray(msg.pi_rows).astype("<u4").tobytes())
        w.parts.append(np.asarray(msg.pi_values, dtype="<f8").tobytes())
        w.u32(np.asarray(msg.gamma_edges).size)
        w.parts.append(np.asarray(msg.gamma_edges).astype("<u4").tobytes())
        w.parts.append(np.asarray(msg.gamma_values, dtype="<f8").tobytes())
        return MessageType.PRICE_REQUEST, w.bytes()
    if isinstance(msg, PriceReply):
        w.u32(msg.iteration)
        w.u32(len(msg.entries))
        for p in msg.entries:
            if np.asarray(p.rows).size != np.asarray(p.values).size:
                raise ValueError("column rows and values differ in length")
            w.u32(p.edge)
            w.u32(p.index)
            w.f64(p.cost)
            w.f64(p.reduced_cost)
            w.u32(np.asarray(p.rows).size)
            w.parts.append(np.asarray(p.rows).astype("<u4").tobytes())
            w.parts.append(np.asarray(p.values, dtype="<f8").tobytes())
        return MessageType.PRICE_REPLY, w.bytes()
    if isinstance(msg, Shutdown):
        return MessageType.SHUTDOWN, b""
    if isinstance(msg, ErrorMessage):
        w.u32(msg.code)
        w.text(msg.message)
        return MessageType.ERROR, w.bytes()
    raise TypeError(f"cannot encode {type(msg).__name__}")


def _decode_payload(kind: int, payload: bytes) -> Message:
    r = _Reader(payload)
    msg: Message
    if kind == MessageType.HELLO:
        msg = Hello(r.text())
    elif kind == MessageType.EDGE_DATA:
        entries = []
        for _ in range(r.u32()):
            entries.append(EdgeEntry(r.u32(), r.f64s(), r.u32s(), r.u32s(), r.u32s(), r.f64s()))
        msg = EdgeData(entries)
    elif kind == MessageType.PRICE_REQUEST:
        iteration = r.u32()
        tie = r.u8()
        if tie not in TIE_NAMES:
            raise MalformedPayloadError(f"unknown tie rule code {tie}")
        n = r.u32()
        pi_rows = np.frombuffer(r._take(4 * n), dtype="<u4").astype(np.int64)
        pi_values = np.frombuffer(r._take(8 * n), dtype="<f8").astype(np.float64)
        k = r.u32()
        gamma_edges = np.frombuffer(r._take(4 * k), dtype="<u4").astype(np.int64)
        gamma_values = np.frombuffer(r._take(8 * k), dtype="<f8").astype(np.float64)
        msg = PriceRequest(iteration, TIE_NAMES[tie], pi_rows, pi_values, gamma_edges, gamma_values)
    elif kind == MessageType.PRICE_REPLY:
        iteration = r.u32()
        entries = []
        for _ in range(r.u32()):
            edge, index, cost, rc = r.u32(), r.u32(), r.f64(), r.f64()
            n = r.u32()
            rows = np.frombuffer(r._take(4 * n), dtype="<u4").astype(np.int64)
            values = np.frombuffer(r._take(8 * n), dtype="<f8").astype(np.float64)
            entries.append(PricedEdge(edge, index, cost, rc, rows, values))
        msg = PriceReply(iteration, entries)
    elif kind == MessageType.SHUTDOWN:
        msg = Shutdown()
    elif kind == MessageType.ERROR:
        msg = ErrorMessage(r.u32(), r.text())
    else:
        raise UnknownMessageTypeError(f"unknown message type {kind}")
    r.done()
    return msg


def encode_frame(msg: Message) -> bytes:
    kind, payload = _encode_payload(msg)
    if len(payload) > MAX_FRAME_SIZE:
        raise OversizeFrameError(f"payload of {len(payload)} bytes exceeds {MAX_FRAME_SIZE}")
    return HEADER.pack(MAGIC, VERSION, int(kind), len(payload)) + payload


def parse_header(header: bytes, max_size: int = MAX_FRAME_SIZE) -> tuple[int, int]:
    """Validate a frame header and return ``(message type, payload length)``."""
    if len(header) < HEADER_SIZE:
        raise TruncatedFrameError(f"header needs {HEADER_SIZE} bytes, got {len(header)}")
    magic, version, kind, length = HEADER.unpack_from(header)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"protocol version {version}, expected {VERSION}")
    if length > max_size:
        raise OversizeFrameError(f"declared payload of {length} bytes exceeds {max_size}")
    if kind not in MessageType._value2member_map_:
        raise UnknownMessageTypeError(f"unknown message type {kind}")
    return kind, length


def decode_frame(data: bytes, max_size: int = MAX_FRAME_SIZE) -> Message:
    kind, length = parse_header(data, max_size)
    if len(data) < HEADER_SIZE + length:
        raise TruncatedFrameError(f"frame declares {length} payload bytes, got {len(data) - HEADER_SIZE}")
    if len(data) > HEADER_SIZE + length:
        raise MalformedPayloadError("bytes after the end of the frame")
    return _decode_payload(kind, data[HEADER_SIZE:])


def _recv_exact(sock, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            raise TruncatedFrameError(f"connection closed with {remaining} bytes outstanding")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock, max_size: int = MAX_FRAME_SIZE) -> tuple[Message, int]:
    """Read one frame from a socket; returns the message and bytes consumed."""
    header = _recv_exact(sock, HEADER_SIZE)
    kind, length = parse_header(header, max_size)
    payload = _recv_exact(sock, length)
    return _decode_payload(kind, payload), HEADER_SIZE + length


def write_frame(sock, msg: Message) -> int:
    frame = encode_frame(msg)
    sock.sendall(frame)
    return len(frame)
