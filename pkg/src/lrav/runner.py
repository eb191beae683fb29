"""Drives one protocol session over a transport endpoint.

On any local abort a single plaintext error frame (type 0xFF, one reason
byte) is sent as a courtesy; a received error frame is recorded but never
trusted. Timeouts and closed channels are reported distinctly so the attack
harness can tell non-response from rejection.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

from . import transport
from .device import DeviceState
from .errors import (
    ChannelClosed,
    FrameError,
    MalformedMessage,
    ProtocolAbort,
    TransportTimeout,
    UnknownPeer,
)
from .protocol import (
    AbortReason,
    Phase,
    SessionState,
    WireM1,
    WireM2,
    WireM3,
    initiate,
    process_m2,
    process_m3,
    respond_m1,
)


@dataclass
class SessionResult:
    established: bool
    state: Optional[SessionState] = None
    reason: Optional[AbortReason] = None
    peer_reported: bool = False
    timed_out: bool = False
    error: Optional[str] = None

    @property
    def session_key(self) -> bytes:
        assert self.state is not None
        return self.state.session_key()

    def describe(self) -> str:
        if self.established:
            return "established"
        if self.timed_out:
            return "timeout"
        if self.reason is not None:
            source = "peer reported " if self.peer_reported else ""
            return f"aborted ({source}{self.reason.name})"
        return f"failed ({self.error})"


def key_fingerprint(key: bytes) -> str:
    """Loggable 8-hex-char identifier for a session key; never the key itself."""
    return hashlib.sha3_256(key).hexdigest()[:8]


def _send_error(ep, reason: AbortReason) -> None:
    try:
        ep.send_frame(transport.MSG_ERROR, bytes([reason]))
    except (ChannelClosed, OSError):
        pass


def _peer_error_result(st: SessionState | None, payload: bytes) -> SessionResult:
    reason = None
    if len(payload) >= 1:
        try:
            reason = AbortReason(payload[0])
        except ValueError:
            reason = None
    if st is not None:
        st.phase = Phase.ABORTED
        st.abort_reason = reason
    return SessionResult(False, st, reason=reason, peer_reported=True)


def _local_abort(ep, st: SessionState | None, reason: AbortReason, detail: str) -> SessionResult:
    if st is not None:
        st.phase = Phase.ABORTED
        st.abort_reason = reason
    _send_error(ep, reason)
    return SessionResult(False, st, reason=reason, error=detail)


def run_initiator(
    dev: DeviceState,
    ep,
    peer_id: str,
    timeout: float = transport.DEFAULT_TIMEOUT,
) -> SessionResult:
    """Run the A role to completion over an open endpoint."""
    st, m1 = initiate(dev, peer_id)  # UnknownPeer is a caller error; let it raise
    ep.send_frame(transport.MSG_M1, m1.pack())
    try:
        frame = ep.recv_frame(timeout)
    except TransportTimeout:
        return SessionResult(False, st, timed_out=True)
    except (ChannelClosed, FrameError) as exc:
        return SessionResult(False, st, error=str(exc))
    if frame.msg_type == transport.MSG_ERROR:
        return _peer_error_result(st, frame.payload)
    if frame.msg_type != transport.MSG_M2:
        return _local_abort(ep, st, AbortReason.MALFORMED, f"unexpected frame type {frame.msg_type:#04x}")
    try:
        m2 = WireM2.unpack(frame.payload)
    except MalformedMessage as exc:
        return _local_abort(ep, st, AbortReason.MALFORMED, str(exc))
    try:
        st, m3 = process_m2(dev, st, m2)
    except ProtocolAbort as exc:
        _send_error(ep, exc.reason)
        return SessionResult(False, st, reason=exc.reason, error=str(exc))
    ep.send_frame(transport.MSG_M3, m3.pack())
    return SessionResult(True, st)


def run_responder(
    dev: DeviceState,
    ep,
    peer_id: str | None = None,
    timeout: float = transport.DEFAULT_TIMEOUT,
) -> SessionResult:
    """Run the B role for one session over an open endpoint."""
    st: SessionState | None = None
    try:
        frame = ep.recv_frame(timeout)
    except TransportTimeout:
        return SessionResult(False, None, timed_out=True)
    except (ChannelClosed, FrameError) as exc:
        return SessionResult(False, None, error=str(exc))
    if frame.msg_type == transport.MSG_ERROR:
        return _peer_error_result(None, frame.payload)
    if frame.msg_type != transport.MSG_M1:
        return _local_abort(ep, None, AbortReason.MALFORMED, f"unexpected frame type {frame.msg_type:#04x}")
    try:
        m1 = WireM1.unpack(frame.payload)
    except MalformedMessage as exc:
        return _local_abort(ep, None, AbortReason.MALFORMED, str(exc))
    try:
        st, m2 = respond_m1(dev, m1, peer_id)
    except ProtocolAbort as exc:
        _send_error(ep, exc.reason)
        return SessionResult(False, None, reason=exc.reason, error=str(exc))
    except UnknownPeer as exc:
        return _local_abort(ep, None, AbortReason.MALFORMED, str(exc))
    ep.send_frame(transport.MSG_M2, m2.pack())
    try:
        frame = ep.recv_frame(timeout)
    except TransportTimeout:
        return SessionResult(False, st, timed_out=True)
    except (ChannelClosed, FrameError) as exc:
        return SessionResult(False, st, error=str(exc))
    if frame.msg_type == transport.MSG_ERROR:
        return _peer_error_result(st, frame.payload)
    if frame.msg_type != transport.MSG_M3:
        return _local_abort(ep, st, AbortReason.MALFORMED, f"unexpected frame type {frame.msg_type:#04x}")
    try:
        st = process_m3(dev, st, WireM3.unpack(frame.payload))
    except ProtocolAbort as exc:
        _send_error(ep, exc.reason)
        return SessionResult(False, st, reason=exc.reason, error=str(exc))
    return SessionResult(True, st)
