"""Length-prefixed framing plus in-memory and TCP byte-stream endpoints.

Frame layout (all integers big-endian):

    magic   4 bytes  "LRAV"
    version 1 byte   0x01
    type    1 byte   0x01=M1  0x02=M2  0x03=M3  0xFF=error
    length  4 bytes  payload byte count, capped at 65536
    payload

The in-memory channel mirrors TCP semantics (ordered, reliable, stream
reassembly) and adds send-side hooks so tests can drop, duplicate, reorder,
or mutate frames. Hooks are installed before a run starts, never mid-run.
"""

from __future__ import annotations

import queue
import socket
import struct
from typing import Callable, Iterable, NamedTuple

from .errors import BadMagic, BadVersion, ChannelClosed, Oversize, TransportTimeout, Truncated

MAGIC = b"LRAV"
VERSION = 0x01
HEADER_BYTES = 10
MAX_PAYLOAD = 65536
DEFAULT_TIMEOUT = 5.0

MSG_M1 = 0x01
MSG_M2 = 0x02
MSG_M3 = 0x03
MSG_ERROR = 0xFF
_VALID_TYPES = frozenset({MSG_M1, MSG_M2, MSG_M3, MSG_ERROR})

_HEADER = struct.Struct(">4sBBI")

FrameHook = Callable[[bytes], Iterable[bytes]]


class Frame(NamedTuple):
    msg_type: int
    payload: bytes


def encode_frame(msg_type: int, payload: bytes) -> bytes:
    if msg_type not in _VALID_TYPES:
        raise ValueError(f"unknown frame type {msg_type:#04x}")
    if len(payload) > MAX_PAYLOAD:
        raise Oversize(f"payload of {len(payload)} bytes exceeds cap {MAX_PAYLOAD}")
    return _HEADER.pack(MAGIC, VERSION, msg_type, len(payload)) + payload


def decode_frame(data: bytes) -> tuple[Frame, bytes]:
    """Decode exactly one frame; returns it plus unconsumed stream bytes.

    Truncated means "feed me more bytes" and is the only non-fatal outcome.
    A type byte outside the version-1 set is reported as BadVersion, since
    the valid type set is defined by the protocol version.
    """
    probe = min(len(data), len(MAGIC))
    if data[:probe] != MAGIC[:probe]:
        raise BadMagic(f"bad frame magic {data[:probe]!r}")
    if len(data) < HEADER_BYTES:
        raise Truncated("incomplete frame header")
    magic, version, msg_type, length = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad frame magic {magic!r}")
    if version != VERSION:
        raise BadVersion(f"unsupported frame version {version:#04x}")
    if msg_type not in _VALID_TYPES:
        raise BadVersion(f"unknown frame type {msg_type:#04x} for version 1")
    if length > MAX_PAYLOAD:
        raise Oversize(f"declared payload of {length} bytes exceeds cap {MAX_PAYLOAD}")
    if len(data) < HEADER_BYTES + length:
        raise Truncated("incomplete frame payload")
    end = HEADER_BYTES + length
    return Frame(msg_type, data[HEADER_BYTES:end]), data[end:]


class _StreamEndpoint:
    """Shared stream-reassembly logic over a byte-chunk source."""

    def __init__(self):
        self._rx = b""

    def _recv_chunk(self, timeout: float) -> bytes:
        raise NotImplementedError

    def recv_frame(self, timeout: float = DEFAULT_TIMEOUT) -> Frame:
        while True:
            try:
                frame, rest = decode_frame(self._rx)
            except Truncated:
                self._rx += self._recv_chunk(timeout)
                continue
            self._rx = rest
            return frame


class MemoryEndpoint(_StreamEndpoint):
    """One side of an in-memory duplex channel."""

    def __init__(self, inbox: "queue.Queue[bytes | None]", outbox: "queue.Queue[bytes | None]"):
        super().__init__()
        self._inbox = inbox
        self._outbox = outbox
        self._closed = False
        self._peer_closed = False
        self.send_hooks: list[FrameHook] = []

    def add_send_hook(self, hook: FrameHook) -> None:
        self.send_hooks.append(hook)

    def send_frame(self, msg_type: int, payload: bytes) -> None:
        if self._closed:
            raise ChannelClosed("endpoint is closed")
        frames = [encode_frame(msg_type, payload)]
        for hook in self.send_hooks:
            frames = [out for data in frames for out in hook(data)]
        for data in frames:
            self._outbox.put(data)

    def _recv_chunk(self, timeout: float) -> bytes:
        if self._closed or self._peer_closed:
            raise ChannelClosed("endpoint is closed")
        try:
            chunk = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TransportTimeout(f"no frame within {timeout:.1f}s") from None
        if chunk is None:
            self._peer_closed = True
            raise ChannelClosed("peer closed the channel")
        return chunk

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(None)


def channel_pair() -> tuple[MemoryEndpoint, MemoryEndpoint]:
    """Two connected endpoints with reliable ordered delivery."""
    a_to_b: "queue.Queue[bytes | None]" = queue.Queue()
    b_to_a: "queue.Queue[bytes | None]" = queue.Queue()
    return MemoryEndpoint(b_to_a, a_to_b), MemoryEndpoint(a_to_b, b_to_a)


class TcpEndpoint(_StreamEndpoint):
    def __init__(self, sock: socket.socket):
        super().__init__()
        self._sock = sock

    def send_frame(self, msg_type: int, payload: bytes) -> None:
        try:
            self._sock.sendall(encode_frame(msg_type, payload))
        except OSError as exc:
            raise ChannelClosed(str(exc)) from exc

    def _recv_chunk(self, timeout: float) -> bytes:
        self._sock.settimeout(timeout)
        try:
            chunk = self._sock.recv(4096)
        except socket.timeout:
            raise TransportTimeout(f"no frame within {timeout:.1f}s") from None
        except OSError as exc:
            raise ChannelClosed(str(exc)) from exc
        if chunk == b"":
            raise ChannelClosed("peer closed the connection")
        return chunk

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class TcpListener:
    def __init__(self, host: str, port: int):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen()

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()[:2]

    def accept(self, timeout: float | None = None) -> TcpEndpoint:
        self._sock.settimeout(timeout)
        try:
            conn, _ = self._sock.accept()
        except socket.timeout:
            raise TransportTimeout("no incoming connection") from None
        return TcpEndpoint(conn)

    def close(self) -> None:
        self._sock.close()


def dial(host: str, port: int, timeout: float = DEFAULT_TIMEOUT) -> TcpEndpoint:
    sock = socket.create_connection((host, port), timeout=timeout)
    return TcpEndpoint(sock)
