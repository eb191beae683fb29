import random

import pytest

_acceptance_failures: list[str] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call" and rep.failed and item.module.__name__ == "test_acceptance":
        criterion = item.name.removeprefix("test_").replace("_", " ")
        _acceptance_failures.append(f"[acceptance] {criterion}: FAIL")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    try:
        import test_acceptance

        lines = list(test_acceptance.PASS_LINES)
    except ImportError:
        pass
    lines += _acceptance_failures
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

from lrav.crtm import AttestationConfig
from lrav.memory import MemoryImage, Region, RegionKind
from lrav.provisioning import (
    FLASH_BASE,
    DeviceProfile,
    TrustStore,
    TrustedPeer,
    build_device,
    compute_expected,
    gen_identity,
)


def flash_image(firmware: bytes, base: int = FLASH_BASE) -> MemoryImage:
    return MemoryImage([Region(base, RegionKind.FLASH, bytearray(firmware))])


def make_pair(rng: random.Random, attested_bytes: int = 8 * 1024, block: int = 1024):
    """Two mutually provisioned devices with seeded random firmware."""
    attest = AttestationConfig(FLASH_BASE, FLASH_BASE + attested_bytes, block)
    id_a, id_b = gen_identity(b"A" * 32), gen_identity(b"B" * 32)
    fw_a = rng.randbytes(attested_bytes)
    fw_b = rng.randbytes(attested_bytes)
    expected_a = compute_expected(flash_image(fw_a), attest)
    expected_b = compute_expected(flash_image(fw_b), attest)
    dev_a = build_device(
        DeviceProfile("alpha", id_a.rom_bytes()[:32], attest),
        TrustStore({"beta": TrustedPeer(id_b.public, (expected_b,))}),
        fw_a,
    )
    dev_b = build_device(
        DeviceProfile("beta", id_b.rom_bytes()[:32], attest),
        TrustStore({"alpha": TrustedPeer(id_a.public, (expected_a,))}),
        fw_b,
    )
    return dev_a, dev_b


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


@pytest.fixture
def device_pair(rng):
    return make_pair(rng)
