"""Three-message mutual attestation and secure-channel bootstrap.

    M1  A -> B : n_A || q_A || AR
    M2  B -> A : n_B || q_B || AR || AE_K(Q_B || sig_B(H(Q_B||n_A||n_B||q_B||q_A)))
    M3  A -> B : AE_K(Q_A || sig_A(H(Q_A||n_A||n_B||q_A||q_B)))

K is derived from the X25519 shared secret and both nonces; the transcript
signatures bind quotes, nonces, and both DH points (note the swapped point
order between M2 and M3). Every verification failure terminates the session
with one of the on-wire abort reason codes. Sessions are single-owner; a
device may run many concurrently.
"""

from __future__ import annotations

import enum
import hashlib
import secrets
from dataclasses import dataclass, field
from typing import Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PublicKey
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)

from . import secretbox
from .crtm import measure
from .device import DeviceState
from .errors import (
    AuthenticationFailed,
    MalformedMessage,
    ProtocolAbort,
    ProtocolStateError,
    UnknownPeer,
    WeakPoint,
)
from .quote import (
    QUOTE_WIRE_BYTES,
    SIGNATURE_BYTES,
    Quote,
    QuoteVerdict,
    sign_quote_gated,
    sign_transcript_gated,
    stage_outgoing_quote,
    verify_quote,
)

NONCE_BYTES = 32
POINT_BYTES = 32
AR_FLAG = 0x01
M1_BYTES = NONCE_BYTES + POINT_BYTES + 1  # 65
INNER_BYTES = QUOTE_WIRE_BYTES + SIGNATURE_BYTES  # 180
BOX_BYTES = INNER_BYTES + secretbox.TAG_BYTES  # 196
M2_BYTES = NONCE_BYTES + POINT_BYTES + 1 + BOX_BYTES  # 261

_KDF_LABEL = b"LIRA-V/1/KDF"
_AE_LABEL = b"LIRA-V/1/AE"


class AbortReason(enum.IntEnum):
    """On-wire reason codes carried by courtesy error frames."""

    BAD_TAG = 0x01
    BAD_SIGNATURE = 0x02
    MEASUREMENT_MISMATCH = 0x03
    MALFORMED = 0x04
    WEAK_POINT = 0x05


class Direction(enum.IntEnum):
    """AE nonce domain separator; one value per encrypted protocol message."""

    M2 = 0x02
    M3 = 0x03


class Role(enum.Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"


class Phase(enum.Enum):
    START = "start"
    SENT_M1 = "sent-m1"
    SENT_M2 = "sent-m2"
    ESTABLISHED = "established"
    ABORTED = "aborted"


# --- wire messages ----------------------------------------------------------

@dataclass(frozen=True)
class WireM1:
    nonce: bytes
    point: bytes
    ar: int = AR_FLAG

    def pack(self) -> bytes:
        return self.nonce + self.point + bytes([self.ar])

    @classmethod
    def unpack(cls, data: bytes) -> "WireM1":
        if len(data) != M1_BYTES:
            raise MalformedMessage(f"M1 must be {M1_BYTES} bytes, got {len(data)}")
        ar = data[64]
        if ar != AR_FLAG:
            raise MalformedMessage(f"bad attestation-request flag {ar:#04x}")
        return cls(data[:32], data[32:64], ar)


@dataclass(frozen=True)
class WireM2:
    nonce: bytes
    point: bytes
    box: bytes
    ar: int = AR_FLAG

    def pack(self) -> bytes:
        return self.nonce + self.point + bytes([self.ar]) + self.box

    @classmethod
    def unpack(cls, data: bytes) -> "WireM2":
        if len(data) != M2_BYTES:
            raise MalformedMessage(f"M2 must be {M2_BYTES} bytes, got {len(data)}")
        ar = data[64]
        if ar != AR_FLAG:
            raise MalformedMessage(f"bad attestation-request flag {ar:#04x}")
        return cls(data[:32], data[32:64], data[65:], ar)


@dataclass(frozen=True)
class WireM3:
    box: bytes

    def pack(self) -> bytes:
        return self.box

    @classmethod
    def unpack(cls, data: bytes) -> "WireM3":
        # Length is deliberately unchecked: a truncated box fails the
        # authentication tag, which is the abort path the protocol defines.
        return cls(data)


# --- session state ----------------------------------------------------------

@dataclass
class EcdhEphemeral:
    secret: Optional[X25519PrivateKey]
    public: bytes

    @classmethod
    def generate(cls) -> "EcdhEphemeral":
        secret = X25519PrivateKey.generate()
        return cls(secret, secret.public_key().public_bytes_raw())

    @property
    def cleared(self) -> bool:
        return self.secret is None


@dataclass
class SessionState:
    role: Role
    peer_id: str
    phase: Phase = Phase.START
    my_nonce: bytes = b""
    peer_nonce: bytes = b""
    eph: EcdhEphemeral = field(default_factory=EcdhEphemeral.generate)
    peer_point: bytes = b""
    k: Optional[bytes] = None
    abort_reason: Optional[AbortReason] = None

    def nonces(self) -> tuple[bytes, bytes]:
        """(n_A, n_B) regardless of which side we are."""
        if self.role is Role.INITIATOR:
            return self.my_nonce, self.peer_nonce
        return self.peer_nonce, self.my_nonce

    def session_key(self) -> bytes:
        """The established channel key; only released once the run completed."""
        if self.phase is not Phase.ESTABLISHED or self.k is None:
            raise ProtocolStateError("session key is not released before Established")
        return self.k

    def snapshot(self) -> dict:
        """Inspection view for logs and tests; contains no secret material."""
        return {
            "role": self.role.value,
            "phase": self.phase.value,
            "peer_id": self.peer_id,
            "my_nonce": self.my_nonce.hex(),
            "peer_nonce": self.peer_nonce.hex(),
            "peer_point": self.peer_point.hex(),
            "has_session_key": self.k is not None,
            "ephemeral_secret_cleared": self.eph.cleared,
            "abort_reason": self.abort_reason.name if self.abort_reason else None,
        }

    def __repr__(self):
        return f"SessionState({self.role.value}, {self.phase.value}, peer={self.peer_id!r})"


def _abort(st: SessionState, reason: AbortReason, message: str | None = None):
    st.phase = Phase.ABORTED
    st.abort_reason = reason
    st.k = None
    raise ProtocolAbort(reason, message)


# --- key schedule -----------------------------------------------------------

def derive_session_key(shared_secret: bytes, n_a: bytes, n_b: bytes) -> bytes:
    """K = SHA3-256(label || shared || n_A || n_B); symmetric on both sides."""
    if len(shared_secret) != 32:
        raise ValueError("shared secret must be 32 bytes")
    if shared_secret == bytes(32):
        raise WeakPoint("all-zero shared secret")
    return hashlib.sha3_256(_KDF_LABEL + shared_secret + n_a + n_b).digest()


def ae_nonce(direction: Direction, n_a: bytes, n_b: bytes) -> bytes:
    """Deterministic 24-byte box nonce; unique per (session, direction)."""
    material = _AE_LABEL + bytes([direction]) + n_a + n_b
    return hashlib.sha3_256(material).digest()[:secretbox.NONCE_BYTES]


def ae_seal(k: bytes, direction: Direction, n_a: bytes, n_b: bytes, plaintext: bytes) -> bytes:
    return secretbox.seal(k, ae_nonce(direction, n_a, n_b), plaintext)


def ae_open(k: bytes, direction: Direction, n_a: bytes, n_b: bytes, box: bytes) -> bytes:
    return secretbox.open_box(k, ae_nonce(direction, n_a, n_b), box)


def transcript_hash(
    quote_bytes: bytes,
    n_first: bytes,
    n_second: bytes,
    q_first: bytes,
    q_second: bytes,
) -> bytes:
    """SHA3-256 over the signed transcript, operands in per-message order."""
    if len(quote_bytes) != QUOTE_WIRE_BYTES:
        raise ValueError(f"quote bytes must be {QUOTE_WIRE_BYTES} bytes")
    for part in (n_first, n_second, q_first, q_second):
        if len(part) != 32:
            raise ValueError("nonces and points must be 32 bytes")
    return hashlib.sha3_256(
        quote_bytes + n_first + n_second + q_first + q_second
    ).digest()


def _exchange(st: SessionState, peer_point: bytes) -> bytes:
    """X25519 with contributory-behaviour check; clears the scalar after use."""
    assert st.eph.secret is not None
    try:
        shared = st.eph.secret.exchange(X25519PublicKey.from_public_bytes(peer_point))
    except ValueError as exc:  # backend rejects low-order/zero results
        raise WeakPoint(str(exc)) from exc
    finally:
        st.eph.secret = None
    if shared == bytes(32):
        raise WeakPoint("all-zero shared secret")
    return shared


def _produce_own_quote(dev: DeviceState) -> bytes:
    """Measure, sign in the gate, and stage through AA memory (116 bytes)."""
    measurement = measure(dev.memory, dev.attest_config)
    own = sign_quote_gated(dev, measurement)
    return stage_outgoing_quote(dev, own.to_wire())


def _verify_peer_inner(
    st: SessionState,
    dev: DeviceState,
    inner: bytes,
    q_first: bytes,
    q_second: bytes,
) -> None:
    """Shared M2/M3 payload validation: transcript signature, then quote."""
    if len(inner) != INNER_BYTES:
        _abort(st, AbortReason.MALFORMED, f"inner plaintext must be {INNER_BYTES} bytes")
    quote_bytes, sig = inner[:QUOTE_WIRE_BYTES], inner[QUOTE_WIRE_BYTES:]
    peer = dev.trust.get(st.peer_id)
    if peer is None:
        raise UnknownPeer(st.peer_id)
    n_a, n_b = st.nonces()
    digest = transcript_hash(quote_bytes, n_a, n_b, q_first, q_second)
    try:
        Ed25519PublicKey.from_public_bytes(peer.verify_key).verify(sig, digest)
    except (InvalidSignature, ValueError):
        _abort(st, AbortReason.BAD_SIGNATURE, "transcript signature rejected")
    try:
        peer_quote = Quote.from_wire(quote_bytes)
    except MalformedMessage as exc:
        _abort(st, AbortReason.MALFORMED, str(exc))
    # Accept if the quote verifies against any provisioned expectation
    # (multiple expected measurements model multiple authorised firmwares).
    verdicts = [
        verify_quote(peer.verify_key, peer_quote, expected)
        for expected in peer.expected
    ]
    if QuoteVerdict.ACCEPT not in verdicts:
        if verdicts[0] is QuoteVerdict.BAD_SIGNATURE:
            _abort(st, AbortReason.BAD_SIGNATURE, "quote signature rejected")
        _abort(st, AbortReason.MEASUREMENT_MISMATCH, f"{st.peer_id}: unexpected measurement")


# --- protocol operations ----------------------------------------------------

def initiate(dev: DeviceState, peer_id: str) -> tuple[SessionState, WireM1]:
    """A's first flight: fresh nonce and ephemeral point plus the AR flag."""
    if dev.trust.get(peer_id) is None:
        raise UnknownPeer(peer_id)
    st = SessionState(role=Role.INITIATOR, peer_id=peer_id)
    st.my_nonce = secrets.token_bytes(NONCE_BYTES)
    st.phase = Phase.SENT_M1
    return st, WireM1(st.my_nonce, st.eph.public)


def respond_m1(
    dev: DeviceState, m1: WireM1, peer_id: str | None = None
) -> tuple[SessionState, WireM2]:
    """B's flight: measure, sign, derive K, and return the sealed quote.

    M1 carries no identity (the paper leaves peer naming to the channel, e.g.
    IP address), so the caller names the peer; with a single provisioned peer
    it may be omitted.
    """
    if peer_id is None:
        peers = dev.trust.peer_ids()
        if len(peers) != 1:
            raise UnknownPeer("peer_id required when multiple peers are provisioned")
        peer_id = peers[0]
    if dev.trust.get(peer_id) is None:
        raise UnknownPeer(peer_id)

    st = SessionState(role=Role.RESPONDER, peer_id=peer_id)
    st.my_nonce = secrets.token_bytes(NONCE_BYTES)
    st.peer_nonce = m1.nonce
    st.peer_point = m1.point

    with dev.lock:
        staged = _produce_own_quote(dev)
        try:
            shared = _exchange(st, m1.point)
            st.k = derive_session_key(shared, *st.nonces())
        except WeakPoint as exc:
            _abort(st, AbortReason.WEAK_POINT, str(exc))
        n_a, n_b = st.nonces()
        digest = transcript_hash(staged, n_a, n_b, st.eph.public, m1.point)
        sig = sign_transcript_gated(dev, digest)
    box = ae_seal(st.k, Direction.M2, n_a, n_b, staged + sig)
    st.phase = Phase.SENT_M2
    return st, WireM2(st.my_nonce, st.eph.public, box)


def process_m2(
    dev: DeviceState, st: SessionState, m2: WireM2
) -> tuple[SessionState, WireM3]:
    """A validates B's flight, then answers with its own sealed quote."""
    if st.role is not Role.INITIATOR or st.phase is not Phase.SENT_M1:
        raise ProtocolStateError(f"M2 not acceptable in phase {st.phase.value}")
    st.peer_nonce = m2.nonce
    st.peer_point = m2.point
    try:
        shared = _exchange(st, m2.point)
        st.k = derive_session_key(shared, *st.nonces())
    except WeakPoint as exc:
        _abort(st, AbortReason.WEAK_POINT, str(exc))
    n_a, n_b = st.nonces()
    try:
        inner = ae_open(st.k, Direction.M2, n_a, n_b, m2.box)
    except AuthenticationFailed:
        _abort(st, AbortReason.BAD_TAG, "M2 box failed authentication")
    _verify_peer_inner(st, dev, inner, m2.point, st.eph.public)

    with dev.lock:
        staged = _produce_own_quote(dev)
        digest = transcript_hash(staged, n_a, n_b, st.eph.public, m2.point)
        sig = sign_transcript_gated(dev, digest)
    box = ae_seal(st.k, Direction.M3, n_a, n_b, staged + sig)
    st.phase = Phase.ESTABLISHED
    return st, WireM3(box)


def process_m3(dev: DeviceState, st: SessionState, m3: WireM3) -> SessionState:
    """B validates A's flight; only then is the session key released."""
    if st.role is not Role.RESPONDER or st.phase is not Phase.SENT_M2:
        raise ProtocolStateError(f"M3 not acceptable in phase {st.phase.value}")
    assert st.k is not None
    n_a, n_b = st.nonces()
    try:
        inner = ae_open(st.k, Direction.M3, n_a, n_b, m3.box)
    except AuthenticationFailed:
        _abort(st, AbortReason.BAD_TAG, "M3 box failed authentication")
    _verify_peer_inner(st, dev, inner, st.peer_point, st.eph.public)
    st.phase = Phase.ESTABLISHED
    return st
