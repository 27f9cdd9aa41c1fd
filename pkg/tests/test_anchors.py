"""Write-once semantics and fidelity of the anchor registry."""
from __future__ import annotations

import random

import pytest

from consentledger.anchors import AlreadyAnchored, AnchorRegistry, UnknownKey
from consentledger.canonical import digest


def test_anchor_and_lookup_round_trip():
    registry = AnchorRegistry()
    value = digest(b"block-0")
    receipt = registry.relay_anchor("audit:0", value, anchored_at=100)
    assert receipt.key == "audit:0"
    assert registry.lookup("audit:0") == value


def test_reanchor_rejected():
    registry = AnchorRegistry()
    registry.relay_anchor("audit:0", digest(b"h0"))
    with pytest.raises(AlreadyAnchored):
        registry.relay_anchor("audit:0", digest(b"h0-prime"))


def test_lookup_unknown_key():
    registry = AnchorRegistry()
    with pytest.raises(UnknownKey):
        registry.lookup("audit:404")


def test_digest_length_enforced():
    registry = AnchorRegistry()
    with pytest.raises(ValueError):
        registry.relay_anchor("short", b"\x01\x02")


def test_write_once_under_randomized_interleavings():
    rng = random.Random(0xA11C)
    registry = AnchorRegistry()
    first_writes: dict[str, bytes] = {}
    rejected = 0
    for i in range(10_000):
        key = f"k:{rng.randrange(2000)}"
        value = digest(f"attempt-{i}".encode())
        if key in first_writes:
            with pytest.raises(AlreadyAnchored):
                registry.relay_anchor(key, value)
            rejected += 1
        else:
            registry.relay_anchor(key, value)
            first_writes[key] = value
    assert rejected > 0
    assert len(registry) == len(first_writes)
    for key, value in first_writes.items():
        assert registry.lookup(key) == value


def test_export_import_round_trip():
    registry = AnchorRegistry()
    for i in range(25):
        registry.relay_anchor(f"audit:{i}", digest(f"b{i}".encode()), anchored_at=i)
    dumped = registry.export_jsonl()
    restored = AnchorRegistry.import_jsonl(dumped)
    assert restored.export_jsonl() == dumped
    assert restored.lookup("audit:7") == registry.lookup("audit:7")
