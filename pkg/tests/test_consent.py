"""PPA lifecycle, consent contracts, stateful queries, treatment teams."""
from __future__ import annotations

import random
from dataclasses import replace
from datetime import date

import pytest

from consentledger.consent import (
    ConsentStatus,
    IncompleteConsent,
    IncompletePpa,
    IncompleteTeam,
    IntegrityStatus,
    NotOwner,
    PpaConflict,
    TamperedPpa,
    TeamConflict,
    UnknownConsent,
    ppa_component_digests,
    ppa_digest_from_components,
)
from consentledger.domain import (
    AccessFrequencyLimit,
    OperationKind,
    Role,
    TimeWindow,
    environment_at,
)
from conftest import DEFAULT_START, TEAM_POOLS, consent, make_ppa, make_team

READ = OperationKind.READ
OFFICE_HOURS = TimeWindow(8 * 3600, 17 * 3600)


def test_create_ppa_success_is_active_and_anchored(world):
    ppa = make_ppa(world, [consent("IC-1", {"PR1001"}, {"HR1005"}, ["READ"])], deploy=False)
    assert ppa.status.value == "ACTIVE"
    assert world.anchors.lookup(f"ppa:{ppa.ppa_id}") == ppa.ppa_digest
    assert ppa.ppa_digest == ppa_digest_from_components(ppa.component_digests)
    assert ppa.ppa_id in world.consents.links_for("PT1001").ppa_ids


def test_create_ppa_missing_icc_is_incomplete(world):
    pc, prc, roc = world._default_components("PT1001")
    with pytest.raises(IncompletePpa):
        world.consents.create_ppa("PT1001", pc, prc, roc, (), date(2026, 1, 1), date(2026, 12, 31))


def test_create_ppa_missing_component_group_is_incomplete(world):
    pc, prc, roc = world._default_components("PT1001")
    icc = (consent("IC-1", {"PR1001"}, {"HR1005"}, ["READ"]),)
    with pytest.raises(IncompletePpa):
        world.consents.create_ppa("PT1001", pc, None, roc, icc, date(2026, 1, 1), date(2026, 12, 31))


def test_forbidden_grant_is_a_ppa_conflict(world):
    # The insurance-agent policy forbids writes on visit notes; granting that
    # triple by consent conflicts with the registered policy set.
    make_ppa(world, [consent("IC-OK", {"PR1001"}, {"HR1005"}, ["READ"])], deploy=False)
    with pytest.raises(PpaConflict):
        make_ppa(world, [consent("IC-BAD", {"ICA1001"}, {"HR1005"}, ["WRITE"])], deploy=False)


def test_duplicate_consent_id_is_a_ppa_conflict(world):
    make_ppa(world, [consent("IC-DUP", {"PR1001"}, {"HR1005"}, ["READ"])], deploy=False)
    with pytest.raises(PpaConflict):
        make_ppa(world, [consent("IC-DUP", {"PR1004"}, {"HR1004"}, ["READ"])], deploy=False)


def test_ppa_integrity_intact_then_tampered(world):
    ppa = make_ppa(world, [consent("IC-1", {"PR1001"}, {"HR1005"}, ["READ"])], deploy=False)
    assert world.consents.verify_ppa_integrity(ppa.ppa_id) is IntegrityStatus.INTACT

    tampered_pc = replace(ppa.pc, personal=ppa.pc.personal[:-1] + "X")
    world.consents.overwrite_ppa(replace(ppa, pc=tampered_pc))
    assert world.consents.verify_ppa_integrity(ppa.ppa_id) is IntegrityStatus.TAMPERED


def test_ppa_integrity_detects_deleted_consent_entry(world):
    entries = [
        consent("IC-1", {"PR1001"}, {"HR1005"}, ["READ"]),
        consent("IC-2", {"PR1004"}, {"HR1004"}, ["READ"]),
    ]
    ppa = make_ppa(world, entries, deploy=False)
    world.consents.overwrite_ppa(replace(ppa, icc=ppa.icc[:1]))
    assert world.consents.verify_ppa_integrity(ppa.ppa_id) is IntegrityStatus.TAMPERED


def test_deploy_assigns_address_and_owner(world):
    ppa = make_ppa(world, [consent("IC-1", {"PR1001"}, {"HR1005"}, ["READ"])], deploy=False)
    addresses = world.consents.deploy_consent_contracts(ppa.ppa_id)
    assert len(addresses) == 1 and addresses[0].startswith("0x")
    contract = world.consents.contract_at(addresses[0])
    assert contract.owner_patient_id == "PT1001"
    assert addresses[0] in world.consents.links_for("PT1001").contract_addresses


def test_deploy_rejects_consent_missing_operations(world):
    bad = consent("IC-NOOP", {"PR1001"}, {"HR1005"}, [])
    ppa = make_ppa(world, [bad], deploy=False)
    with pytest.raises(IncompleteConsent):
        world.consents.deploy_consent_contracts(ppa.ppa_id)


def test_deploy_skips_incomplete_entry_but_deploys_the_rest(world):
    entries = [
        consent("IC-GOOD", {"PR1001"}, {"HR1005"}, ["READ"]),
        consent("IC-EMPTY", {"PR1004"}, set(), ["READ"]),
    ]
    ppa = make_ppa(world, entries, deploy=False)
    addresses = world.consents.deploy_consent_contracts(ppa.ppa_id)
    assert len(addresses) == 1
    with pytest.raises(UnknownConsent):
        world.consents.contract_for_consent("IC-EMPTY")


def test_deploy_refuses_tampered_ppa(world):
    ppa = make_ppa(world, [consent("IC-1", {"PR1001"}, {"HR1005"}, ["READ"])], deploy=False)
    world.consents.overwrite_ppa(replace(ppa, pc=replace(ppa.pc, mailing="elsewhere")))
    with pytest.raises(TamperedPpa):
        world.consents.deploy_consent_contracts(ppa.ppa_id)


def test_query_respects_time_window(world):
    make_ppa(world, [consent("IC-TW", {"PR1001"}, {"HR1005"}, ["READ"], [OFFICE_HOURS])])
    at_0930 = environment_at(DEFAULT_START + 3600)  # 09:30
    answer = world.consents.query_consent("PR1001", READ, "HR1005", at_0930)
    assert answer.satisfied and answer.consent_id == "IC-TW"

    at_1730 = environment_at(DEFAULT_START + 9 * 3600)  # 17:30
    answer = world.consents.query_consent("PR1001", READ, "HR1005", at_1730)
    assert not answer.satisfied
    assert "TimeWindow" in answer.reason


def test_frequency_limit_five_then_denied(world):
    make_ppa(world, [consent("IC-F5", {"PR1002"}, {"HR1005"}, ["READ"], [AccessFrequencyLimit(5)])])
    env = environment_at(DEFAULT_START)
    outcomes = [
        world.consents.query_consent("PR1002", READ, "HR1005", env).satisfied for _ in range(6)
    ]
    assert outcomes == [True] * 5 + [False]
    answer = world.consents.query_consent("PR1002", READ, "HR1005", env)
    assert not answer.satisfied and "frequency" in answer.reason


@pytest.mark.parametrize("limit", [1, 2, 5])
@pytest.mark.parametrize("queries", range(11))
def test_frequency_counters_exact(world, limit, queries):
    make_ppa(world, [consent("IC-F", {"PR1002"}, {"HR1005"}, ["READ"], [AccessFrequencyLimit(limit)])])
    env = environment_at(DEFAULT_START)
    satisfied = sum(
        world.consents.query_consent("PR1002", READ, "HR1005", env).satisfied
        for _ in range(queries)
    )
    assert satisfied == min(limit, queries)
    contract = world.consents.contract_for_consent("IC-F")
    assert contract.usage_counters.get("PR1002", 0) <= limit


def test_frequency_counters_are_per_grantee(world):
    make_ppa(
        world,
        [consent("IC-2G", {"PR1001", "PR1002"}, {"HR1005"}, ["READ"], [AccessFrequencyLimit(2)])],
    )
    env = environment_at(DEFAULT_START)
    assert world.consents.query_consent("PR1001", READ, "HR1005", env).satisfied
    assert world.consents.query_consent("PR1001", READ, "HR1005", env).satisfied
    assert not world.consents.query_consent("PR1001", READ, "HR1005", env).satisfied
    # The second grantee still has their own allowance.
    assert world.consents.query_consent("PR1002", READ, "HR1005", env).satisfied


def test_revoke_then_query_not_satisfied(world):
    make_ppa(world, [consent("IC-R", {"PR1001"}, {"HR1005"}, ["READ"])])
    env = environment_at(DEFAULT_START)
    assert world.consents.query_consent("PR1001", READ, "HR1005", env).satisfied
    status = world.consents.revoke_consent("PT1001", "IC-R")
    assert status is ConsentStatus.REVOKED
    assert not world.consents.query_consent("PR1001", READ, "HR1005", env).satisfied


def test_revoke_requires_owner(world):
    make_ppa(world, [consent("IC-R", {"PR1001"}, {"HR1005"}, ["READ"])])
    with pytest.raises(NotOwner):
        world.consents.revoke_consent("PT1002", "IC-R")
    with pytest.raises(UnknownConsent):
        world.consents.revoke_consent("PT1001", "IC-MISSING")


def test_revoked_or_exhausted_consents_never_satisfy(world):
    """Randomized revocation schedules: once revoked or frequency-exhausted,
    a consent never satisfies a later query."""
    entries = [
        consent(f"IC-{i}", {"PR1001"}, {f"HR100{1 + (i % 5)}"}, ["READ"],
                [AccessFrequencyLimit(1 + i % 3)] if i % 2 else [])
        for i in range(8)
    ]
    make_ppa(world, entries)
    env = environment_at(DEFAULT_START)
    rng = random.Random(2026)
    dead: set[str] = set()
    for _ in range(400):
        entry = rng.choice(entries)
        if rng.random() < 0.1 and entry.consent_id not in dead:
            world.consents.revoke_consent("PT1001", entry.consent_id)
            dead.add(entry.consent_id)
            continue
        object_id = next(iter(entry.object_ids))
        answer = world.consents.query_consent("PR1001", READ, object_id, env)
        if answer.satisfied:
            assert answer.consent_id not in dead
        contract = world.consents.contract_for_consent(entry.consent_id)
        limit = entry.frequency_limit()
        if limit is not None and contract.usage_counters.get("PR1001", 0) >= limit:
            dead.add(entry.consent_id)


def test_team_creation_fills_all_nine_roles(world):
    team = make_team(world)
    members = team.member_map()
    assert len(members) == 9
    assert set(members) == {r for r in Role if r is not Role.PATIENT}
    assert members[Role.EMC] == "EC1001"
    assert world.anchors.lookup(f"ptt:{team.ptt_id}") == team.ptt_digest


def test_team_requires_every_pool(world):
    pools = dict(TEAM_POOLS)
    pools[Role.NRS] = []
    with pytest.raises(IncompleteTeam):
        world.consents.create_treatment_team("PT1001", pools, seed=1)


def test_team_requires_registered_emergency_contact(world):
    world.consents._emergency_contacts.pop("PT1002")
    with pytest.raises(IncompleteTeam):
        world.consents.create_treatment_team("PT1002", TEAM_POOLS, seed=1)


def test_team_draw_is_seed_deterministic(world, fixture_set):
    pools = fixture_set.role_pools()
    team_a = world.consents.create_treatment_team("PT1003", pools, seed=99)
    from consentledger.scenario import ScenarioRunner
    from consentledger.fixtures import default_fixture_dir

    other = ScenarioRunner(default_fixture_dir(), seed=11)
    team_b = other.consents.create_treatment_team("PT1003", pools, seed=99)
    assert team_a.members == team_b.members


def test_emc_slot_is_never_randomly_drawn(world, fixture_set):
    pools = fixture_set.role_pools()
    for seed, patient in [(1, "PT1002"), (2, "PT1003"), (3, "PT1004"), (4, "PT1005")]:
        team = world.consents.create_treatment_team(patient, pools, seed=seed)
        assert team.member_map()[Role.EMC] == fixture_set.emergency_contact_of[patient]


def test_second_team_for_patient_conflicts(world):
    make_team(world)
    with pytest.raises(TeamConflict):
        world.consents.create_treatment_team("PT1001", TEAM_POOLS, seed=5)


def test_active_ppa_digest_recomputable(world):
    ppa = make_ppa(world, [consent("IC-1", {"PR1001"}, {"HR1005"}, ["READ"])], deploy=False)
    recomputed = ppa_digest_from_components(
        ppa_component_digests(ppa.pc, ppa.prc, ppa.roc, ppa.icc)
    )
    assert recomputed == ppa.ppa_digest
