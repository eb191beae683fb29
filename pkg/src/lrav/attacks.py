"""Executable adversary scenarios with expected detection verdicts.

Each scenario builds an honest world, applies one scripted adversary action
(memory writes, PMP writes, frame drops/replays/mutations, message forgery),
and reports the observed verdict. Adversary actions go through the untrusted
device surface (mem_access, pmp.configure), transport hooks, and public
protocol functions only; splice/forgery scenarios additionally grant the
adversary session keys or plaintexts to show that even then the transcript
binding holds. Verdicts are deterministic for a fixed seed.
"""

from __future__ import annotations

import enum
import random
import threading
from dataclasses import dataclass
from typing import Callable, Optional

from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey

from . import pmp, transport
from .crtm import AttestationConfig
from .device import DeviceState, mem_access
from .errors import AccessFault, LockedEntry, ProtocolAbort
from .protocol import (
    AbortReason,
    Direction,
    WireM2,
    WireM3,
    ae_open,
    ae_seal,
    derive_session_key,
    initiate,
    process_m2,
    process_m3,
    respond_m1,
)
from .provisioning import (
    FLASH_BASE,
    DeviceProfile,
    TrustStore,
    TrustedPeer,
    build_device,
    compute_expected,
    gen_identity,
)
from .runner import SessionResult, run_initiator, run_responder

ATTACK_TIMEOUT = 0.3  # short: non-response scenarios resolve by timing out


class VerdictKind(enum.Enum):
    ESTABLISHED = "established"
    ABORTED = "aborted"
    ACCESS_FAULT = "access-fault"
    LOCKED_ENTRY = "locked-entry"
    TIMEOUT = "timeout"
    AUDIT_OK = "audit-ok"
    AUDIT_FAIL = "audit-fail"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    reason: Optional[AbortReason] = None

    def __str__(self):
        if self.reason is not None:
            return f"{self.kind.value}({self.reason.name})"
        return self.kind.value


@dataclass(frozen=True)
class Scenario:
    name: str
    summary: str
    expected: Verdict
    run: Callable[[random.Random], Verdict]
    adversary: Optional[Callable] = None  # inspected by the confinement test


def run_scenario(scenario: Scenario, seed: int = 0) -> Verdict:
    return scenario.run(random.Random(seed))


# --- honest-world scaffolding -------------------------------------------------

_ATTESTED_BYTES = 8 * 1024
_BLOCK = 1024


def _honest_pair(rng: random.Random) -> tuple[DeviceState, DeviceState]:
    """Two mutually provisioned devices with random (seeded) firmware."""
    id_a, id_b = gen_identity(b"A" * 32), gen_identity(b"B" * 32)
    attest = AttestationConfig(FLASH_BASE, FLASH_BASE + _ATTESTED_BYTES, _BLOCK)
    fw_a, fw_b = rng.randbytes(_ATTESTED_BYTES), rng.randbytes(_ATTESTED_BYTES)

    from .memory import MemoryImage, Region, RegionKind

    def expected(fw):
        image = MemoryImage([Region(FLASH_BASE, RegionKind.FLASH, bytearray(fw))])
        return compute_expected(image, attest)

    dev_a = build_device(
        DeviceProfile("alpha", id_a.rom_bytes()[:32], attest),
        TrustStore({"beta": TrustedPeer(id_b.public, (expected(fw_b),))}),
        fw_a,
    )
    dev_b = build_device(
        DeviceProfile("beta", id_b.rom_bytes()[:32], attest),
        TrustStore({"alpha": TrustedPeer(id_a.public, (expected(fw_a),))}),
        fw_b,
    )
    return dev_a, dev_b


def _run_session(dev_a, dev_b, *, a_hooks=(), b_hooks=(), timeout=ATTACK_TIMEOUT):
    """One full run over an in-memory channel; responder on a worker thread."""
    ep_a, ep_b = transport.channel_pair()
    for hook in a_hooks:
        ep_a.add_send_hook(hook)
    for hook in b_hooks:
        ep_b.add_send_hook(hook)
    results: dict[str, SessionResult] = {}

    def responder():
        results["b"] = run_responder(dev_b, ep_b, "alpha", timeout=timeout)

    worker = threading.Thread(target=responder)
    worker.start()
    results["a"] = run_initiator(dev_a, ep_a, "beta", timeout=timeout)
    worker.join()
    return results["a"], results["b"]


def _verdict_of(result: SessionResult) -> Verdict:
    if result.established:
        return Verdict(VerdictKind.ESTABLISHED)
    if result.timed_out:
        return Verdict(VerdictKind.TIMEOUT)
    return Verdict(VerdictKind.ABORTED, result.reason)


# --- adversary actions ---------------------------------------------------------
# Confinement rule: these touch devices only through mem_access / pmp.configure
# in the untrusted context, transport hooks, and public protocol functions.

def _adv_rewrite_qsk_pmp(dev: DeviceState) -> Verdict:
    """[A1] try to retarget the locked QSK PMP entry at the attacker's memory."""
    grabby = pmp.PmpConfig(read=True, write=True, execute=True,
                           addr_mode=pmp.AddrMode.NAPOT, lock=False)
    try:
        pmp.configure(dev.bank, 0, grabby, pmp.napot_addr_reg(0x2000_0000, 64))
    except LockedEntry:
        return Verdict(VerdictKind.LOCKED_ENTRY)
    return Verdict(VerdictKind.ESTABLISHED)  # attack succeeded: failure


def _adv_read_qsk(dev: DeviceState) -> Verdict:
    """[G2] read the signing-key window from untrusted machine mode."""
    try:
        mem_access(dev, pmp.Access.READ, dev.qsk_base, length=32)
    except AccessFault:
        return Verdict(VerdictKind.ACCESS_FAULT)
    return Verdict(VerdictKind.ESTABLISHED)


def _adv_write_rom(dev: DeviceState) -> Verdict:
    """[G1] overwrite the expected-measurement store held in ROM."""
    try:
        mem_access(dev, pmp.Access.WRITE, 0x1000, data=b"peer mallory")
    except AccessFault:
        return Verdict(VerdictKind.ACCESS_FAULT)
    return Verdict(VerdictKind.ESTABLISHED)


def _adv_tamper_firmware(dev: DeviceState, rng: random.Random) -> None:
    """Flip one bit somewhere in the attested flash range (plain memory)."""
    addr = FLASH_BASE + rng.randrange(_ATTESTED_BYTES)
    current = mem_access(dev, pmp.Access.READ, addr, length=1)
    mem_access(dev, pmp.Access.WRITE, addr, data=bytes([current[0] ^ (1 << rng.randrange(8))]))


def _adv_zeroize_staged_quote(dev: DeviceState) -> None:
    """[A3] overwrite the attestation agent's staged quote before transmission."""
    from .quote import QUOTE_WIRE_BYTES

    mem_access(dev, pmp.Access.WRITE, dev.staging_addr, data=bytes(QUOTE_WIRE_BYTES))


def _adv_drop_all(data: bytes):
    """[A2] the device's responses never reach the network."""
    return ()


def _adv_bitflip(rng: random.Random, region: slice):
    """Flip one bit inside a chosen byte range of the next matching frame."""

    def hook(data: bytes):
        body = bytearray(data)
        indices = range(*region.indices(len(body)))
        pos = indices[rng.randrange(len(indices))]
        body[pos] ^= 1 << rng.randrange(8)
        return (bytes(body),)

    return hook


def _adv_splice_m3(dev_a, dev_b, old_inner: bytes) -> Verdict:
    """Cross-session splice: replay an old M3 plaintext inside a new session.

    The adversary is granted the new session's key (worst case) and still
    cannot make B accept the stale signature: both nonces and both DH points
    are inside the signed transcript.
    """
    st_a, m1 = initiate(dev_a, "beta")
    st_b, m2 = respond_m1(dev_b, m1, "alpha")
    st_a, _m3 = process_m2(dev_a, st_a, m2)
    n_a, n_b = st_a.nonces()
    forged = ae_seal(st_a.k, Direction.M3, n_a, n_b, old_inner)
    try:
        process_m3(dev_b, st_b, WireM3(forged))
    except ProtocolAbort as exc:
        return Verdict(VerdictKind.ABORTED, exc.reason)
    return Verdict(VerdictKind.ESTABLISHED)


def _adv_swap_point(dev_a, dev_b) -> Verdict:
    """Swap B's DH point in M2 for an attacker point, re-encrypting honestly.

    The attacker can compute the key A will derive (it owns the substituted
    point) and is even granted B's plaintext, yet the transcript signature
    pins the original q_B.
    """
    st_a, m1 = initiate(dev_a, "beta")
    st_b, m2 = respond_m1(dev_b, m1, "alpha")
    attacker = X25519PrivateKey.generate()
    attacker_point = attacker.public_key().public_bytes_raw()
    n_a, n_b = st_b.nonces()
    inner = ae_open(st_b.k, Direction.M2, n_a, n_b, m2.box)  # granted plaintext
    from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PublicKey

    k_prime = derive_session_key(
        attacker.exchange(X25519PublicKey.from_public_bytes(m1.point)), n_a, n_b
    )
    forged = WireM2(m2.nonce, attacker_point, ae_seal(k_prime, Direction.M2, n_a, n_b, inner))
    try:
        process_m2(dev_a, st_a, forged)
    except ProtocolAbort as exc:
        return Verdict(VerdictKind.ABORTED, exc.reason)
    return Verdict(VerdictKind.ESTABLISHED)


# --- scenario runners -----------------------------------------------------------

def _scn_pmp_lock_rewrite(rng):
    dev_a, _ = _honest_pair(rng)
    return _adv_rewrite_qsk_pmp(dev_a)


def _scn_qsk_read(rng):
    dev_a, _ = _honest_pair(rng)
    return _adv_read_qsk(dev_a)


def _scn_rom_write(rng):
    dev_a, _ = _honest_pair(rng)
    return _adv_write_rom(dev_a)


def _scn_firmware_tamper(rng):
    dev_a, dev_b = _honest_pair(rng)
    _adv_tamper_firmware(dev_b, rng)
    res_a, _res_b = _run_session(dev_a, dev_b)
    return _verdict_of(res_a)


def _scn_quote_overwrite(rng):
    dev_a, dev_b = _honest_pair(rng)
    dev_b.quote_staging_hook = lambda dev: _adv_zeroize_staged_quote(dev)
    res_a, _res_b = _run_session(dev_a, dev_b)
    return _verdict_of(res_a)


def _scn_non_response(rng):
    dev_a, dev_b = _honest_pair(rng)
    res_a, _res_b = _run_session(dev_a, dev_b, b_hooks=[_adv_drop_all])
    return _verdict_of(res_a)


def _scn_message_drop(rng):
    dev_a, dev_b = _honest_pair(rng)
    res_a, _res_b = _run_session(dev_a, dev_b, a_hooks=[_adv_drop_all])
    return _verdict_of(res_a)


def _scn_ciphertext_bitflip(rng):
    dev_a, dev_b = _honest_pair(rng)
    # M2 payload: nonce(32) point(32) ar(1) box(196); flip inside the box,
    # past the frame header (10 bytes).
    box = slice(10 + 65, None)
    res_a, _res_b = _run_session(dev_a, dev_b, b_hooks=[_adv_bitflip(rng, box)])
    return _verdict_of(res_a)


def _scn_m2_replay(rng):
    dev_a, dev_b = _honest_pair(rng)
    recorded: list[bytes] = []

    def record_m2(data: bytes):
        recorded.append(data)
        return (data,)

    res_a, res_b = _run_session(dev_a, dev_b, b_hooks=[record_m2])
    if not (res_a.established and res_b.established and recorded):
        return Verdict(VerdictKind.AUDIT_FAIL)

    def replay_m2(data: bytes):  # substitute the stale flight for the fresh one
        return (recorded[0],)

    res_a2, _res_b2 = _run_session(dev_a, dev_b, b_hooks=[replay_m2])
    return _verdict_of(res_a2)


def _scn_m3_splice(rng):
    dev_a, dev_b = _honest_pair(rng)
    st_a, m1 = initiate(dev_a, "beta")
    st_b, m2 = respond_m1(dev_b, m1, "alpha")
    st_a, m3 = process_m2(dev_a, st_a, m2)
    process_m3(dev_b, st_b, m3)
    n_a, n_b = st_a.nonces()
    old_inner = ae_open(st_a.session_key(), Direction.M3, n_a, n_b, m3.box)
    return _adv_splice_m3(dev_a, dev_b, old_inner)


def _scn_q_swap(rng):
    dev_a, dev_b = _honest_pair(rng)
    return _adv_swap_point(dev_a, dev_b)


def _scn_nonce_reuse_audit(rng):
    """Honest-rule audit: nonces and DH points are never reused by a device."""
    dev_a, dev_b = _honest_pair(rng)
    seen: set[bytes] = set()
    count = 0
    for _ in range(6):
        ep_a, ep_b = transport.channel_pair()
        tapped: list[bytes] = []

        def tap(data: bytes):
            tapped.append(data)
            return (data,)

        ep_a.add_send_hook(tap)
        ep_b.add_send_hook(tap)
        res_a, res_b = {}, {}
        worker = threading.Thread(
            target=lambda: res_b.update(r=run_responder(dev_b, ep_b, "alpha", timeout=ATTACK_TIMEOUT))
        )
        worker.start()
        res_a["r"] = run_initiator(dev_a, ep_a, "beta", timeout=ATTACK_TIMEOUT)
        worker.join()
        if not (res_a["r"].established and res_b["r"].established):
            return Verdict(VerdictKind.AUDIT_FAIL)
        for data in tapped:
            frame, _ = transport.decode_frame(data)
            if frame.msg_type in (transport.MSG_M1, transport.MSG_M2):
                seen.add(frame.payload[:32])   # nonce
                seen.add(frame.payload[32:64])  # DH point
                count += 2
    return Verdict(VerdictKind.AUDIT_OK) if len(seen) == count else Verdict(VerdictKind.AUDIT_FAIL)


def catalog() -> list[Scenario]:
    """The built-in scenario set; every expected verdict is a detection."""
    aborted = lambda reason: Verdict(VerdictKind.ABORTED, reason)
    return [
        Scenario(
            "pmp-lock-rewrite",
            "rewrite the locked QSK PMP entry from untrusted code",
            Verdict(VerdictKind.LOCKED_ENTRY), _scn_pmp_lock_rewrite, _adv_rewrite_qsk_pmp,
        ),
        Scenario(
            "qsk-read-attempt",
            "read the signing-key window from untrusted code",
            Verdict(VerdictKind.ACCESS_FAULT), _scn_qsk_read, _adv_read_qsk,
        ),
        Scenario(
            "rom-write-attempt",
            "overwrite the ROM-resident trust store",
            Verdict(VerdictKind.ACCESS_FAULT), _scn_rom_write, _adv_write_rom,
        ),
        Scenario(
            "firmware-tamper",
            "flip one attested flash bit on the responder, then attest",
            aborted(AbortReason.MEASUREMENT_MISMATCH), _scn_firmware_tamper, _adv_tamper_firmware,
        ),
        Scenario(
            "quote-overwrite",
            "zeroize the staged quote in untrusted memory before transmission",
            aborted(AbortReason.MALFORMED), _scn_quote_overwrite, _adv_zeroize_staged_quote,
        ),
        Scenario(
            "non-response",
            "device responses never reach the network (removable-storage analogue)",
            Verdict(VerdictKind.TIMEOUT), _scn_non_response, _adv_drop_all,
        ),
        Scenario(
            "message-drop",
            "drop the initiator's first flight",
            Verdict(VerdictKind.TIMEOUT), _scn_message_drop, _adv_drop_all,
        ),
        Scenario(
            "ciphertext-bitflip",
            "flip one ciphertext bit inside M2",
            aborted(AbortReason.BAD_TAG), _scn_ciphertext_bitflip, None,
        ),
        Scenario(
            "m2-replay",
            "substitute a recorded M2 from an earlier session",
            aborted(AbortReason.BAD_TAG), _scn_m2_replay, None,
        ),
        Scenario(
            "m3-cross-session-splice",
            "re-encrypt an old M3 plaintext under the current session key",
            aborted(AbortReason.BAD_SIGNATURE), _scn_m3_splice, _adv_splice_m3,
        ),
        Scenario(
            "q-value-swap",
            "swap q_B in M2 for an attacker point with a re-encrypted payload",
            aborted(AbortReason.BAD_SIGNATURE), _scn_q_swap, _adv_swap_point,
        ),
        Scenario(
            "nonce-reuse-audit",
            "honest devices never reuse nonces or ephemeral points",
            Verdict(VerdictKind.AUDIT_OK), _scn_nonce_reuse_audit, None,
        ),
    ]


def scenario_names() -> list[str]:
    return [s.name for s in catalog()]
