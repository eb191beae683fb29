"""Scaling benchmarks: CRTM measurement time/work and end-to-end protocol time.

Absolute numbers are host-dependent; the properties of interest are ratios:
time is linear in attested bytes (2x memory -> 2x time), the byte work
counter is exactly linear, and block size has only a small effect. Samples
for all configurations are collected interleaved within each iteration so
clock-speed drift hits every configuration equally.
"""

from __future__ import annotations

import os
import statistics
import threading
import time
from dataclasses import dataclass

from . import transport
from .crtm import AttestationConfig, WorkCounter, measure
from .device import DeviceState
from .memory import MemoryImage, Region, RegionKind
from .provisioning import (
    FLASH_BASE,
    DeviceProfile,
    TrustStore,
    TrustedPeer,
    build_device,
    compute_expected,
    gen_identity,
)
from .runner import run_initiator, run_responder

KIB = 1024
MIB = 1024 * 1024

CRTM_SIZES = [1 * KIB << i for i in range(13)]  # 1 KiB .. 4 MiB doubling
CRTM_BLOCKS = [1 * KIB, 2 * KIB, 4 * KIB]
PROTOCOL_SIZES = [64 * KIB, 128 * KIB, 256 * KIB]
DEFAULT_ITERS = 20


@dataclass
class CrtmSample:
    size: int
    block: int
    times: list[float]
    work_bytes: int

    @property
    def mean(self) -> float:
        return statistics.fmean(self.times)

    @property
    def median(self) -> float:
        return statistics.median(self.times)


@dataclass
class ProtocolSample:
    size: int
    times: list[float]

    @property
    def mean(self) -> float:
        return statistics.fmean(self.times)


def _flash_image(size: int) -> MemoryImage:
    return MemoryImage([Region(FLASH_BASE, RegionKind.FLASH, bytearray(os.urandom(size)))])


def crtm_bench(
    sizes: list[int] | None = None,
    blocks: list[int] | None = None,
    iters: int = DEFAULT_ITERS,
) -> list[CrtmSample]:
    sizes = sizes or CRTM_SIZES
    blocks = blocks or CRTM_BLOCKS
    images = {size: _flash_image(size) for size in sizes}
    combos = [(size, block) for size in sizes for block in blocks]
    samples = {}
    for size, block in combos:
        counter = WorkCounter()
        config = AttestationConfig(FLASH_BASE, FLASH_BASE + size, block)
        measure(images[size], config, counter)  # warm-up; also fixes the work count
        samples[(size, block)] = CrtmSample(size, block, [], counter.bytes_hashed)
    for _ in range(iters):
        for size, block in combos:
            config = AttestationConfig(FLASH_BASE, FLASH_BASE + size, block)
            start = time.perf_counter()
            measure(images[size], config)
            samples[(size, block)].times.append(time.perf_counter() - start)
    return [samples[c] for c in combos]


def _bench_pair(size: int) -> tuple[DeviceState, DeviceState]:
    attest = AttestationConfig(FLASH_BASE, FLASH_BASE + size, 1 * KIB)
    id_a, id_b = gen_identity(b"bench-a" * 5), gen_identity(b"bench-b" * 5)
    fw_a, fw_b = os.urandom(size), os.urandom(size)

    def expected(fw):
        return compute_expected(_image_of(fw), attest)

    def _image_of(fw):
        return MemoryImage([Region(FLASH_BASE, RegionKind.FLASH, bytearray(fw))])

    dev_a = build_device(
        DeviceProfile("bench-a", id_a.rom_bytes()[:32], attest, firmware=None),
        TrustStore({"bench-b": TrustedPeer(id_b.public, (expected(fw_b),))}),
        fw_a,
    )
    dev_b = build_device(
        DeviceProfile("bench-b", id_b.rom_bytes()[:32], attest, firmware=None),
        TrustStore({"bench-a": TrustedPeer(id_a.public, (expected(fw_a),))}),
        fw_b,
    )
    return dev_a, dev_b


def protocol_bench(
    sizes: list[int] | None = None, iters: int = DEFAULT_ITERS
) -> list[ProtocolSample]:
    """Full handshake wall time over the in-memory channel, per attested size."""
    sizes = sizes or PROTOCOL_SIZES
    pairs = {size: _bench_pair(size) for size in sizes}
    samples = {size: ProtocolSample(size, []) for size in sizes}
    for _ in range(iters):
        for size in sizes:
            dev_a, dev_b = pairs[size]
            ep_a, ep_b = transport.channel_pair()
            outcome = {}
            worker = threading.Thread(
                target=lambda: outcome.update(b=run_responder(dev_b, ep_b, "bench-a"))
            )
            start = time.perf_counter()
            worker.start()
            outcome["a"] = run_initiator(dev_a, ep_a, "bench-b")
            worker.join()
            elapsed = time.perf_counter() - start
            if not (outcome["a"].established and outcome["b"].established):
                raise RuntimeError(f"bench handshake failed: {outcome['a'].describe()}")
            samples[size].times.append(elapsed)
    return [samples[size] for size in sizes]


def _human_size(n: int) -> str:
    if n % MIB == 0:
        return f"{n // MIB}MB"
    return f"{n // KIB}KB"


def format_text(crtm: list[CrtmSample], protocol: list[ProtocolSample], iters: int) -> str:
    lines = [f"CRTM measurement, mean seconds over {iters} iterations"]
    blocks = sorted({s.block for s in crtm})
    by_size: dict[int, dict[int, CrtmSample]] = {}
    for s in crtm:
        by_size.setdefault(s.size, {})[s.block] = s
    header = "total".rjust(8) + "".join(f"b={_human_size(b)}".rjust(12) for b in blocks)
    header += "work-bytes".rjust(12)
    lines.append(header)
    for size in sorted(by_size):
        row = _human_size(size).rjust(8)
        for b in blocks:
            sample = by_size[size].get(b)
            row += (f"{sample.mean:.6f}" if sample else "-").rjust(12)
        any_sample = next(iter(by_size[size].values()))
        row += f"{any_sample.work_bytes}".rjust(12)
        lines.append(row)
    if protocol:
        lines.append("")
        lines.append(f"end-to-end protocol, mean seconds over {iters} iterations")
        lines.append("attested".rjust(8) + "time".rjust(12))
        for s in protocol:
            lines.append(_human_size(s.size).rjust(8) + f"{s.mean:.6f}".rjust(12))
    return "\n".join(lines)


def format_csv(crtm: list[CrtmSample], protocol: list[ProtocolSample]) -> str:
    lines = ["kind,size_bytes,block_bytes,mean_seconds,work_bytes"]
    for s in crtm:
        lines.append(f"crtm,{s.size},{s.block},{s.mean:.9f},{s.work_bytes}")
    for p in protocol:
        lines.append(f"protocol,{p.size},,{p.mean:.9f},")
    return "\n".join(lines)
