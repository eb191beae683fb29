"""Quote signing behind the execute-only gate, and quote verification.

A quote binds the measured digest AND the attested range/block size under
the device's Ed25519 signing key, so a prover cannot substitute a
differently-scoped measurement. Wire form is the 52-byte measurement pack
followed by the 64-byte signature (116 bytes total).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from . import pmp
from .crtm import MEASUREMENT_BYTES, Measurement, measurement_equals
from .device import QSK_REGION_SIZE, DeviceState, ExecutionContext
from .errors import GateViolation, MalformedMessage

SIGNATURE_BYTES = 64
QUOTE_WIRE_BYTES = MEASUREMENT_BYTES + SIGNATURE_BYTES  # 116
SEED_BYTES = 32


class QuoteSigningKey:
    """Ed25519 identity keypair; the seed lives in the PMP-protected window."""

    def __init__(self, seed: bytes):
        if len(seed) != SEED_BYTES:
            raise ValueError("signing seed must be 32 bytes")
        self._seed = bytes(seed)
        self.public = (
            Ed25519PrivateKey.from_private_bytes(self._seed)
            .public_key()
            .public_bytes_raw()
        )

    def rom_bytes(self) -> bytes:
        """Mask-ROM contents of the key window: seed || verification key."""
        return self._seed + self.public

    def __repr__(self):
        return f"QuoteSigningKey(public={self.public.hex()})"


def canonical_quote_bytes(measurement: Measurement) -> bytes:
    """The exact byte string a quote signature covers (52 bytes)."""
    return measurement.pack()


@dataclass(frozen=True)
class Quote:
    measurement: Measurement
    signature: bytes

    def __post_init__(self):
        if len(self.signature) != SIGNATURE_BYTES:
            raise ValueError(f"signature must be {SIGNATURE_BYTES} bytes")

    def to_wire(self) -> bytes:
        return canonical_quote_bytes(self.measurement) + self.signature

    @classmethod
    def from_wire(cls, data: bytes) -> "Quote":
        if len(data) != QUOTE_WIRE_BYTES:
            raise MalformedMessage(f"quote must be {QUOTE_WIRE_BYTES} bytes, got {len(data)}")
        try:
            measurement = Measurement.unpack(data[:MEASUREMENT_BYTES])
        except Exception as exc:
            raise MalformedMessage(f"bad quote contents: {exc}") from exc
        return cls(measurement, data[MEASUREMENT_BYTES:])


def _gate_is_intact(dev: DeviceState) -> bool:
    """The key window must be execute-only for untrusted machine mode."""
    ctx = ExecutionContext.UNTRUSTED_M
    for addr in range(dev.qsk_base, dev.qsk_base + QSK_REGION_SIZE):
        if not pmp.check(dev.bank, pmp.Access.EXECUTE, addr, ctx):
            return False
        if pmp.check(dev.bank, pmp.Access.READ, addr, ctx):
            return False
        if pmp.check(dev.bank, pmp.Access.WRITE, addr, ctx):
            return False
    return True


def _wipe(buf: bytearray) -> None:
    buf[:] = bytes(len(buf))


def _gated_sign(dev: DeviceState, message: bytes) -> bytes:
    """The single QSK entry point.

    Refuses (GateViolation) unless boot finished and the key window really is
    locked execute-only: execute-allowed plus read-denied is the trust-anchor
    precondition for key secrecy. Gate-local key buffers are wiped before
    returning; deeper cache/register effects are out of scope.
    """
    if not dev.boot_complete:
        raise GateViolation("device has not completed boot")
    with dev.lock:
        if not _gate_is_intact(dev):
            raise GateViolation("QSK window is not locked execute-only")
        seed_buf = bytearray(dev.memory.read(dev.qsk_base, SEED_BYTES))
        try:
            signer = Ed25519PrivateKey.from_private_bytes(bytes(seed_buf))
            return signer.sign(message)
        finally:
            _wipe(seed_buf)
            del signer


def sign_quote_gated(dev: DeviceState, measurement: Measurement) -> Quote:
    """Sign a measurement inside the X-only gate; deterministic per input."""
    return Quote(measurement, _gated_sign(dev, canonical_quote_bytes(measurement)))


def sign_transcript_gated(dev: DeviceState, digest: bytes) -> bytes:
    """Sign a 32-byte transcript hash with the same gated QSK."""
    if len(digest) != 32:
        raise ValueError("transcript digest must be 32 bytes")
    return _gated_sign(dev, digest)


class QuoteVerdict(enum.Enum):
    ACCEPT = "accept"
    BAD_SIGNATURE = "bad-signature"
    MEASUREMENT_MISMATCH = "measurement-mismatch"


def verify_quote(verify_key: bytes, quote: Quote, expected: Measurement) -> QuoteVerdict:
    """Check signature then measurement against the provisioned expectation.

    Returns a verdict instead of raising; callers decide how to abort.
    """
    try:
        pub = Ed25519PublicKey.from_public_bytes(verify_key)
        pub.verify(quote.signature, canonical_quote_bytes(quote.measurement))
    except (InvalidSignature, ValueError):
        return QuoteVerdict.BAD_SIGNATURE
    if not measurement_equals(quote.measurement, expected):
        return QuoteVerdict.MEASUREMENT_MISMATCH
    return QuoteVerdict.ACCEPT


def stage_outgoing_quote(dev: DeviceState, wire: bytes) -> bytes:
    """Park a wire quote in AA-readable SRAM and read it back for transmission.

    This is the attestation agent's staging buffer: plain untrusted memory.
    A resident adversary (dev.quote_staging_hook) may overwrite it between
    the store and the load; the agent transmits whatever it reads back.
    """
    if len(wire) != QUOTE_WIRE_BYTES:
        raise MalformedMessage(f"staged quote must be {QUOTE_WIRE_BYTES} bytes")
    from .device import mem_access  # local import keeps module load order simple

    mem_access(dev, pmp.Access.WRITE, dev.staging_addr, data=wire)
    if dev.quote_staging_hook is not None:
        dev.quote_staging_hook(dev)
    staged = mem_access(dev, pmp.Access.READ, dev.staging_addr, length=QUOTE_WIRE_BYTES)
    assert staged is not None
    return staged
