"""Trail integrity verification against anchored digests."""
from __future__ import annotations

import json
import random
from dataclasses import replace

import pytest

from consentledger.anchors import UnknownKey
from consentledger.consent import IntegrityStatus
from consentledger.domain import Role
from consentledger.verifier import (
    ClaimStatus,
    NotOwnTrail,
    TrailClaim,
    UnknownBlock,
    claims_from_json,
)
from conftest import consent, enforce, make_ppa, make_team
from test_policy import matrix_consents


@pytest.fixture
def committed_world(world):
    make_team(world)
    make_ppa(world, matrix_consents())
    for i in range(24):
        enforce(world, "PR1001", "READ", f"HR100{1 + i % 8}")
        enforce(world, "PR1004", "READ", "HR1005")
    world.flush_poc()
    return world


def claims_of(world, subject_id):
    return tuple(world._claims_by_subject.get(subject_id, ()))


def test_genuine_entries_verify_clean(committed_world):
    claims = claims_of(committed_world, "PR1001")
    assert claims
    report = committed_world.verifier.verify_trails("PR1001", claims)
    assert report.overall is ClaimStatus.NOT_MODIFIED
    assert all(r.status is ClaimStatus.NOT_MODIFIED for r in report.results)


def test_post_anchor_bit_flip_is_detected(committed_world):
    claims = claims_of(committed_world, "PR1001")
    target = claims[0]
    block = committed_world.chain.block_at(target.block_height)
    txs = list(block.transactions)
    index = next(i for i, tx in enumerate(txs) if tx.tx_id == target.tx_id)
    flipped = replace(txs[index], object_id=txs[index].object_id[:-1] + "X")
    txs[index] = flipped
    committed_world.chain.replace_block(target.block_height, replace(block, transactions=tuple(txs)))

    report = committed_world.verifier.verify_trails("PR1001", [target])
    assert report.results[0].status is ClaimStatus.MODIFIED


def test_claiming_anothers_trail_is_rejected(committed_world):
    foreign = claims_of(committed_world, "PR1004")[0]
    with pytest.raises(NotOwnTrail):
        committed_world.verifier.verify_trails("PT1001", [foreign])


def test_unknown_block_height(committed_world):
    claim = replace(claims_of(committed_world, "PR1001")[0], block_height=999)
    with pytest.raises(UnknownBlock):
        committed_world.verifier.verify_trails("PR1001", [claim])


def test_ppa_anchor_intact_then_tampered(world):
    make_team(world)
    ppa = make_ppa(world, [consent("IC-1", {"PR1001"}, {"HR1005"}, ["READ"])], deploy=False)
    assert world.verifier.verify_ppa_anchor(ppa.ppa_id) is IntegrityStatus.INTACT
    swapped = replace(ppa, pc=replace(ppa.pc, emergency_contact_id="EC1002"))
    world.consents.overwrite_ppa(swapped)
    assert world.verifier.verify_ppa_anchor(ppa.ppa_id) is IntegrityStatus.TAMPERED


def test_ptt_anchor_intact_then_tampered(world):
    team = make_team(world)
    assert world.verifier.verify_ptt_anchor(team.ptt_id) is IntegrityStatus.INTACT
    members = dict(team.members)
    members[Role.EMC] = "EC1003"
    swapped = replace(team, members=tuple(sorted(members.items(), key=lambda kv: kv[0].value)))
    world.consents.overwrite_team(swapped)
    assert world.verifier.verify_ptt_anchor(team.ptt_id) is IntegrityStatus.TAMPERED


def test_never_anchored_id_raises(world):
    with pytest.raises(UnknownKey):
        world.verifier.verify_ppa_anchor("PPA-PT1001-404")
    with pytest.raises(UnknownKey):
        world.verifier.verify_ptt_anchor("PTT-PT1001-404")


def test_cross_module_anchor_round_trip(world):
    ppa = make_ppa(world, [consent("IC-1", {"PR1001"}, {"HR1005"}, ["READ"])], deploy=False)
    assert world.anchors.lookup(f"ppa:{ppa.ppa_id}") == ppa.ppa_digest


def test_no_false_alarms_on_untampered_chain(committed_world):
    claims = claims_of(committed_world, "PR1001") + claims_of(committed_world, "PR1004")
    checked = 0
    for _ in range(40):
        for claim in claims:
            report = committed_world.verifier.verify_trails(claim.subject_id, [claim])
            assert report.overall is ClaimStatus.NOT_MODIFIED
            checked += 1
    assert checked >= 1000


def test_randomized_tampers_all_detected(committed_world):
    """500 random post-anchor field tampers, every one reported MODIFIED."""
    rng = random.Random(0x7E57)
    chain = committed_world.chain
    verifier = committed_world.verifier
    all_claims = claims_of(committed_world, "PR1001") + claims_of(committed_world, "PR1004")
    by_height: dict[int, list[TrailClaim]] = {}
    for claim in all_claims:
        by_height.setdefault(claim.block_height, []).append(claim)

    detected = 0
    for _ in range(500):
        height = rng.choice(sorted(by_height))
        block = chain.block_at(height)
        mutated = _random_mutation(rng, block)
        chain.replace_block(height, mutated)
        claim = rng.choice(by_height[height])
        report = verifier.verify_trails(claim.subject_id, [claim])
        if report.results[0].status is ClaimStatus.MODIFIED:
            detected += 1
        chain.replace_block(height, block)
    assert detected == 500


def _random_mutation(rng, block):
    roll = rng.random()
    if roll < 0.5:
        index = rng.randrange(len(block.transactions))
        tx = block.transactions[index]
        field = rng.choice(["subject_id", "object_id", "conditions_snapshot", "timestamp", "tx_id"])
        value = getattr(tx, field)
        new = value + 1 if isinstance(value, int) else _flip_char(rng, value)
        txs = list(block.transactions)
        txs[index] = replace(tx, **{field: new})
        return replace(block, transactions=tuple(txs))
    if roll < 0.65:
        return replace(block, sealer_id=_flip_char(rng, block.sealer_id))
    if roll < 0.8:
        return replace(block, timestamp=block.timestamp ^ (1 << rng.randrange(16)))
    if roll < 0.9:
        return replace(block, prev_hash=_flip_byte(rng, block.prev_hash))
    if roll < 0.95:
        return replace(block, tx_root=_flip_byte(rng, block.tx_root))
    return replace(block, block_hash=_flip_byte(rng, block.block_hash))


def _flip_char(rng, text):
    index = rng.randrange(len(text))
    return text[:index] + chr(ord(text[index]) ^ (1 << rng.randrange(4))) + text[index + 1:]


def _flip_byte(rng, blob):
    index = rng.randrange(len(blob))
    return blob[:index] + bytes([blob[index] ^ (1 << rng.randrange(8))]) + blob[index + 1:]


def test_responses_reveal_no_foreign_subjects(committed_world):
    claims = claims_of(committed_world, "PR1004")
    report = committed_world.verifier.verify_trails("PR1004", claims)
    wire = json.dumps(report.to_json_dict())
    other_subjects = {
        sid for sid in committed_world.fixtures.subjects if sid not in ("PR1004",)
    }
    for sid in other_subjects:
        assert sid not in wire


def test_claims_file_round_trip(committed_world):
    claims = claims_of(committed_world, "PR1001")[:3]
    text = "\n".join(json.dumps(c.to_json_dict(), sort_keys=True) for c in claims) + "\n"
    assert claims_from_json(text) == tuple(claims)
