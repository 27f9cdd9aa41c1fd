from __future__ import annotations

from dataclasses import replace

import pytest

from consentledger.consent import InformedConsent
from consentledger.domain import AccessRequest, OperationKind, Role, environment_at
from consentledger.fixtures import default_fixture_dir, load_fixtures
from consentledger.scenario import DEFAULT_START, ScenarioRunner

# The canonical PT1001 team used throughout: one member per selectable role.
TEAM_POOLS = {
    Role.DOC: ["PR1001"],
    Role.NRS: ["PR1004"],
    Role.STF: ["PR1006"],
    Role.BLO: ["PR1010"],
    Role.RLT: ["PR1008"],
    Role.PLT: ["PR1009"],
    Role.PHR: ["PHR1001"],
    Role.INA: ["ICA1001"],
}

TEAM_MEMBER = {
    Role.DOC: "PR1001",
    Role.NRS: "PR1004",
    Role.STF: "PR1006",
    Role.BLO: "PR1010",
    Role.RLT: "PR1008",
    Role.PLT: "PR1009",
    Role.EMC: "EC1001",
    Role.PHR: "PHR1001",
    Role.INA: "ICA1001",
    Role.PATIENT: "PT1001",
}


@pytest.fixture(scope="session")
def fixture_set():
    return load_fixtures(default_fixture_dir(), seed=0)


@pytest.fixture
def world():
    """A fully wired runner over the shipped fixtures (no script executed)."""
    return ScenarioRunner(default_fixture_dir(), seed=11)


def make_team(runner: ScenarioRunner, patient_id: str = "PT1001"):
    return runner.consents.create_treatment_team(patient_id, TEAM_POOLS, seed=runner.seed)


def consent(consent_id, grantees, objects, operations, conditions=()):
    return InformedConsent(
        consent_id=consent_id,
        grantee_subject_ids=frozenset(grantees),
        object_ids=frozenset(objects),
        operations=frozenset(OperationKind(o) for o in operations),
        conditions=tuple(conditions),
    )


def make_ppa(runner: ScenarioRunner, consents, patient_id: str = "PT1001", deploy: bool = True):
    pc, prc, roc = runner._default_components(patient_id)
    from datetime import date

    ppa = runner.consents.create_ppa(
        patient_id, pc, prc, roc, tuple(consents), date(2026, 1, 1), date(2027, 12, 31)
    )
    if deploy:
        runner.consents.deploy_consent_contracts(ppa.ppa_id)
    return ppa


def signed_request(
    runner: ScenarioRunner,
    subject_id: str,
    operation: str,
    object_id: str,
    *,
    at: int | None = None,
    emergency: bool = False,
    location: str = "hospital-main",
    source_ip: str = "10.0.0.1",
    forge: bool = False,
) -> AccessRequest:
    env = environment_at(
        at if at is not None else runner.clock.now,
        location_tag=location,
        source_ip=source_ip,
        emergency_flag=emergency,
    )
    request = AccessRequest(
        subject_id=subject_id,
        operation=OperationKind(operation),
        object_id=object_id,
        environment=env,
    )
    signature = runner.keystore.sign_as(subject_id, request.signing_payload())
    if forge:
        signature = bytes([signature[0] ^ 0x01]) + signature[1:]
    return replace(request, signature=signature)


def enforce(runner: ScenarioRunner, subject_id: str, operation: str, object_id: str, **kwargs):
    return runner.engine.pcep_enforce(signed_request(runner, subject_id, operation, object_id, **kwargs))


__all__ = [
    "DEFAULT_START",
    "TEAM_MEMBER",
    "TEAM_POOLS",
    "consent",
    "enforce",
    "make_ppa",
    "make_team",
    "signed_request",
]
