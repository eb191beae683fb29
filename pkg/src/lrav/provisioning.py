"""Offline phase: identities, expected measurements, trust stores, profiles.

Trust-store file format (line-based UTF-8, `#` comments, blank-line
separated records, canonical on save):

    peer <id>
    key <64 hex chars>
    expect <start-hex> <end-hex> <block-decimal> <64 hex chars>

Every peer needs a key line and at least one expect line. The parsed store
is immutable and its canonical text is embedded in device ROM, mirroring
verification material provisioned into trusted read-only storage.
"""

from __future__ import annotations

import hashlib
import json
import secrets
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from . import crtm
from .device import QSK_REGION_SIZE, DeviceState, device_reset
from .errors import DuplicatePeer, InsufficientEntropy, InvalidRange, ParseError
from .memory import MemoryImage, Region, RegionKind
from .pmp import PmpBank
from .quote import QuoteSigningKey

MIN_ENTROPY_BYTES = 32
MAX_PEER_ID_BYTES = 64

ROM_BASE = 0x0000_1000
ROM_SIZE = 16 * 1024
FLASH_BASE = 0x2000_0000
FLASH_SIZE = 4 * 1024 * 1024
SRAM_BASE = 0x8000_0000
SRAM_SIZE = 16 * 1024
QSK_BASE = ROM_BASE + ROM_SIZE - 0x100  # 64-byte aligned window near the end of ROM


def gen_identity(seed_entropy: bytes | None = None) -> QuoteSigningKey:
    """Derive a signing identity from >= 32 bytes of entropy.

    The Ed25519 seed is SHA3-256 of the input, so a fixed test seed gives a
    reproducible keypair and long inputs are condensed uniformly.
    """
    if seed_entropy is None:
        seed_entropy = secrets.token_bytes(MIN_ENTROPY_BYTES)
    if len(seed_entropy) < MIN_ENTROPY_BYTES:
        raise InsufficientEntropy(
            f"need at least {MIN_ENTROPY_BYTES} bytes of entropy, got {len(seed_entropy)}"
        )
    return QuoteSigningKey(hashlib.sha3_256(seed_entropy).digest())


def compute_expected(image: MemoryImage, config: crtm.AttestationConfig) -> crtm.Measurement:
    """Verifier-side golden measurement; same function the device runs."""
    return crtm.measure(image, config)


# --- trust store -------------------------------------------------------------

@dataclass(frozen=True)
class TrustedPeer:
    verify_key: bytes
    expected: tuple[crtm.Measurement, ...]

    def __post_init__(self):
        if len(self.verify_key) != 32:
            raise ValueError("verify key must be 32 bytes")
        if not self.expected:
            raise ValueError("a trusted peer needs at least one expected measurement")


class TrustStore:
    """Read-only map from peer id to verification material."""

    def __init__(self, entries: Mapping[str, TrustedPeer]):
        for peer_id in entries:
            if not peer_id or len(peer_id.encode()) > MAX_PEER_ID_BYTES:
                raise ValueError(f"peer id must be 1..{MAX_PEER_ID_BYTES} bytes: {peer_id!r}")
        self._entries = MappingProxyType(dict(entries))

    def get(self, peer_id: str) -> TrustedPeer | None:
        return self._entries.get(peer_id)

    def __contains__(self, peer_id: str) -> bool:
        return peer_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def peer_ids(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def canonical_text(self) -> str:
        blocks = [
            format_trust_record(peer_id, peer.verify_key, peer.expected)
            for peer_id, peer in self._entries.items()
        ]
        return "\n".join(blocks)


def format_trust_record(
    peer_id: str, verify_key: bytes, expected: Iterable[crtm.Measurement]
) -> str:
    lines = [f"peer {peer_id}", f"key {verify_key.hex()}"]
    for m in expected:
        cfg = m.config
        lines.append(
            f"expect {cfg.start_addr:x} {cfg.end_addr:x} {cfg.block_size} {m.digest.hex()}"
        )
    return "\n".join(lines) + "\n"


def parse_trust_store(text: str) -> TrustStore:
    entries: dict[str, TrustedPeer] = {}
    peer_id: str | None = None
    peer_line = 0
    key: bytes | None = None
    expected: list[crtm.Measurement] = []

    def finish(lineno: int):
        nonlocal peer_id, key, expected
        if peer_id is None:
            return
        if key is None:
            raise ParseError(peer_line, f"peer {peer_id!r} has no key line")
        if not expected:
            raise ParseError(peer_line, f"peer {peer_id!r} has no expect lines")
        entries[peer_id] = TrustedPeer(key, tuple(expected))
        peer_id, key, expected = None, None, []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            finish(lineno)
            continue
        fields = line.split()
        tag = fields[0]
        if tag == "peer":
            finish(lineno)
            if len(fields) != 2:
                raise ParseError(lineno, "peer line needs exactly one id")
            if fields[1] in entries:
                raise DuplicatePeer(f"line {lineno}: duplicate peer {fields[1]!r}")
            peer_id, peer_line = fields[1], lineno
            if len(peer_id.encode()) > MAX_PEER_ID_BYTES:
                raise ParseError(lineno, f"peer id longer than {MAX_PEER_ID_BYTES} bytes")
        elif tag == "key":
            if peer_id is None:
                raise ParseError(lineno, "key line before any peer line")
            if key is not None:
                raise ParseError(lineno, f"peer {peer_id!r} already has a key")
            if len(fields) != 2:
                raise ParseError(lineno, "key line needs exactly one value")
            key = _hex_field(fields[1], 32, lineno, "key")
        elif tag == "expect":
            if peer_id is None:
                raise ParseError(lineno, "expect line before any peer line")
            if len(fields) != 5:
                raise ParseError(lineno, "expect line needs start, end, block, digest")
            try:
                start, end = int(fields[1], 16), int(fields[2], 16)
                block = int(fields[3], 10)
            except ValueError:
                raise ParseError(lineno, "bad numeric field on expect line") from None
            digest = _hex_field(fields[4], 32, lineno, "digest")
            try:
                config = crtm.AttestationConfig(start, end, block)
            except InvalidRange as exc:
                raise ParseError(lineno, str(exc)) from None
            expected.append(crtm.Measurement(digest, config))
        else:
            raise ParseError(lineno, f"unknown directive {tag!r}")
    finish(len(text.splitlines()) + 1)
    return TrustStore(entries)


def _hex_field(value: str, nbytes: int, lineno: int, what: str) -> bytes:
    try:
        raw = bytes.fromhex(value)
    except ValueError:
        raise ParseError(lineno, f"{what} is not valid hex") from None
    if len(raw) != nbytes:
        raise ParseError(lineno, f"{what} must be {nbytes} bytes ({2 * nbytes} hex chars)")
    return raw


def load_trust_store(path: str | Path) -> TrustStore:
    return parse_trust_store(Path(path).read_text())


def save_trust_store(path: str | Path, store: TrustStore) -> None:
    Path(path).write_text(store.canonical_text())


# --- device profile ----------------------------------------------------------

@dataclass(frozen=True)
class MemoryLayout:
    rom_base: int = ROM_BASE
    rom_size: int = ROM_SIZE
    flash_base: int = FLASH_BASE
    flash_size: int = FLASH_SIZE
    sram_base: int = SRAM_BASE
    sram_size: int = SRAM_SIZE
    qsk_base: int = QSK_BASE

    def __post_init__(self):
        if self.qsk_base % QSK_REGION_SIZE:
            raise ValueError(f"qsk_base must be {QSK_REGION_SIZE}-byte aligned")
        if not (
            self.rom_base <= self.qsk_base
            and self.qsk_base + QSK_REGION_SIZE <= self.rom_base + self.rom_size
        ):
            raise ValueError("qsk window must sit inside the rom region")


@dataclass(frozen=True)
class DeviceProfile:
    device_id: str
    qsk_seed: bytes
    attest: crtm.AttestationConfig
    layout: MemoryLayout = MemoryLayout()
    firmware: str | None = None  # path, resolved relative to the profile file

    def __post_init__(self):
        if len(self.qsk_seed) != 32:
            raise ValueError("qsk_seed must be 32 bytes")


def save_profile(path: str | Path, profile: DeviceProfile) -> None:
    layout = profile.layout
    doc = {
        "device_id": profile.device_id,
        "qsk_seed": profile.qsk_seed.hex(),
        "attest": {
            "start": hex(profile.attest.start_addr),
            "end": hex(profile.attest.end_addr),
            "block": profile.attest.block_size,
        },
        "memory": {
            "rom_base": hex(layout.rom_base),
            "rom_size": hex(layout.rom_size),
            "flash_base": hex(layout.flash_base),
            "flash_size": hex(layout.flash_size),
            "sram_base": hex(layout.sram_base),
            "sram_size": hex(layout.sram_size),
            "qsk_base": hex(layout.qsk_base),
        },
        "firmware": profile.firmware,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_profile(path: str | Path) -> DeviceProfile:
    doc = json.loads(Path(path).read_text())
    try:
        attest = crtm.AttestationConfig(
            int(doc["attest"]["start"], 0),
            int(doc["attest"]["end"], 0),
            int(doc["attest"]["block"]),
        )
        mem = doc.get("memory", {})
        layout = MemoryLayout(
            rom_base=int(mem.get("rom_base", hex(ROM_BASE)), 0),
            rom_size=int(mem.get("rom_size", hex(ROM_SIZE)), 0),
            flash_base=int(mem.get("flash_base", hex(FLASH_BASE)), 0),
            flash_size=int(mem.get("flash_size", hex(FLASH_SIZE)), 0),
            sram_base=int(mem.get("sram_base", hex(SRAM_BASE)), 0),
            sram_size=int(mem.get("sram_size", hex(SRAM_SIZE)), 0),
            qsk_base=int(mem.get("qsk_base", hex(QSK_BASE)), 0),
        )
        return DeviceProfile(
            device_id=doc["device_id"],
            qsk_seed=bytes.fromhex(doc["qsk_seed"]),
            attest=attest,
            layout=layout,
            firmware=doc.get("firmware"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"bad device profile {path}: {exc}") from exc


# --- device construction ------------------------------------------------------

def build_device(
    profile: DeviceProfile,
    trust: TrustStore,
    firmware: bytes = b"",
) -> DeviceState:
    """Assemble a device and run its reset sequence (ROM boot included).

    ROM holds the trust store's canonical text followed by the QSK window;
    firmware is mapped at the flash base; SRAM starts zeroed.
    """
    layout = profile.layout
    if len(firmware) > layout.flash_size:
        raise ValueError(f"firmware ({len(firmware)} bytes) exceeds flash size")
    flash = bytearray(layout.flash_size)
    flash[:len(firmware)] = firmware
    image = MemoryImage([
        Region(layout.rom_base, RegionKind.ROM, bytearray(layout.rom_size)),
        Region(layout.flash_base, RegionKind.FLASH, flash),
        Region(layout.sram_base, RegionKind.SRAM, bytearray(layout.sram_size)),
    ])

    store_bytes = trust.canonical_text().encode()
    store_capacity = profile.layout.qsk_base - layout.rom_base
    if len(store_bytes) > store_capacity:
        raise ValueError(f"trust store ({len(store_bytes)} bytes) does not fit in rom")
    image.load_rom(layout.rom_base, store_bytes)

    identity = QuoteSigningKey(profile.qsk_seed)
    image.load_rom(layout.qsk_base, identity.rom_bytes())

    crtm.validate_range(image, profile.attest)
    dev = DeviceState(
        device_id=profile.device_id,
        memory=image,
        bank=PmpBank(),
        identity=identity,
        trust=trust,
        attest_config=profile.attest,
        qsk_base=layout.qsk_base,
        sram_base=layout.sram_base,
    )
    return device_reset(dev)
