"""Canonical serialization, digest vectors, and the simulated signatures."""
from __future__ import annotations

from dataclasses import replace
from datetime import date
from itertools import permutations

import pytest

from consentledger.canonical import (
    canonical_serialize,
    derive_keypair,
    digest,
    hexdigest,
    sign,
    verify,
)
from consentledger.domain import (
    AccessFrequencyLimit,
    DateRange,
    DaySet,
    IpAllowList,
    LocationSet,
    TimeWindow,
    Weekday,
    environment_at,
)

# Frozen golden values for the shipped PT1001 fixture serialized with seed 0.
PT1001_CANONICAL_LENGTH = 267
PT1001_CANONICAL_DIGEST = "a92493f4a7bc9038cb06b6d55dd0d4d491bbb42a5297f3330ed781c1dabc7615"

SHA256_EMPTY = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
SHA256_ABC = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_serialization_is_deterministic(fixture_set):
    for subject in fixture_set.subjects.values():
        assert canonical_serialize(subject) == canonical_serialize(subject)
    env = environment_at(1_000_000)
    assert canonical_serialize(env) == canonical_serialize(env)


def test_differing_field_changes_bytes(fixture_set):
    profile = fixture_set.subjects["PT1001"]
    other = replace(profile, email="other@compliance.com")
    assert canonical_serialize(profile) != canonical_serialize(other)


def test_golden_pt1001_bytes(fixture_set):
    data = canonical_serialize(fixture_set.subjects["PT1001"])
    assert len(data) == PT1001_CANONICAL_LENGTH
    assert hexdigest(data) == PT1001_CANONICAL_DIGEST


def test_injective_over_fixture_corpus(fixture_set):
    blobs = [canonical_serialize(s) for s in fixture_set.subjects.values()]
    blobs += [canonical_serialize(r) for r in fixture_set.records.values()]
    blobs += [canonical_serialize(p) for p in fixture_set.policies]
    assert len(set(blobs)) == len(blobs)


def test_union_tags_distinguish_condition_kinds():
    # Same payload shape, different kinds: bytes must differ.
    location = LocationSet(frozenset({"ward-3"}))
    ip = IpAllowList(frozenset({"ward-3"}))
    assert canonical_serialize(location) != canonical_serialize(ip)
    conditions = [
        TimeWindow(28800, 61200),
        DateRange(date(2026, 1, 1), date(2026, 12, 31)),
        DaySet(frozenset({Weekday.MON})),
        location,
        ip,
        AccessFrequencyLimit(5),
    ]
    assert len({canonical_serialize(c) for c in conditions}) == len(conditions)


def test_set_encoding_is_order_free():
    a = DaySet(frozenset({Weekday.MON, Weekday.TUE, Weekday.FRI}))
    b = DaySet(frozenset({Weekday.FRI, Weekday.MON, Weekday.TUE}))
    assert canonical_serialize(a) == canonical_serialize(b)


def test_sha256_published_vectors():
    assert digest(b"").hex() == SHA256_EMPTY
    assert digest(b"abc").hex() == SHA256_ABC


def test_signature_round_trip():
    pair = derive_keypair("0:PT1001")
    message = b"the quick brown fox"
    assert verify(pair.public_key, message, sign(pair.private_key, message))


def test_cross_key_verification_fails():
    a = derive_keypair("0:A")
    b = derive_keypair("0:B")
    message = b"payload"
    assert not verify(b.public_key, message, sign(a.private_key, message))


def test_cross_message_verification_fails():
    pair = derive_keypair("0:A")
    assert not verify(pair.public_key, b"other", sign(pair.private_key, b"original"))


def test_signatures_exhaustive_over_fixture_identities(fixture_set):
    keystore = fixture_set.keystore
    ids = keystore.subject_ids()
    assert len(ids) == 34
    message = b"exhaustive-binding-check"
    signatures = {sid: keystore.sign_as(sid, message) for sid in ids}
    for sid in ids:
        assert verify(keystore.public_key(sid), message, signatures[sid])
        assert not verify(keystore.public_key(sid), message + b"x", signatures[sid])
    for a, b in permutations(ids, 2):
        assert not verify(keystore.public_key(b), message, signatures[a])


def test_unencodable_type_raises():
    with pytest.raises(TypeError):
        canonical_serialize(object())
