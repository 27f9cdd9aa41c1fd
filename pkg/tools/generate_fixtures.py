#!/usr/bin/env python3
"""Regenerate the packaged fixture tables and scenario scripts.

Run from the repository root:  python tools/generate_fixtures.py
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from consentledger.policy import Policy, PolicyRule, ObligationTemplate  # noqa: E402
from consentledger.domain import ObligationKind, OperationKind, Role, RECORD_IDS  # noqa: E402
from consentledger.domain import Verdict  # noqa: E402

DATA = ROOT / "src" / "consentledger" / "data"
FIXTURES = DATA / "fixtures"
SCENARIOS = DATA / "scenarios"

HR = {i: f"HR{1000 + i}" for i in range(1, 11)}
ALL_RECORDS = frozenset(RECORD_IDS)
R, W, U = OperationKind.READ, OperationKind.WRITE, OperationKind.UPDATE
ALL_OPS = frozenset({R, W, U})
PROVIDERS = frozenset({Role.DOC, Role.NRS, Role.STF, Role.BLO, Role.RLT, Role.PLT})


def hrs(*nums: int) -> frozenset[str]:
    return frozenset(HR[n] for n in nums)


# Per-role permission matrix (record numbers per operation). This is the
# operational content of the role policies below; the acceptance suite keeps
# its own independently transcribed copy.
MATRIX: dict[Role, dict[OperationKind, tuple[int, ...]]] = {
    Role.DOC: {R: (1, 2, 3, 4, 5, 6, 7, 8), W: (2, 5, 6), U: (2, 5, 6)},
    Role.NRS: {R: (4, 5, 6), W: (), U: ()},
    Role.STF: {R: (1,), W: (1,), U: (1,)},
    Role.BLO: {R: (9, 10), W: (9, 10), U: (9, 10)},
    Role.RLT: {R: (8,), W: (8,), U: (8,)},
    Role.PLT: {R: (3, 7), W: (3, 4, 7), U: (3, 4, 7)},
    Role.EMC: {R: (1, 5, 6, 7, 8), W: (), U: ()},
    Role.PHR: {R: (6,), W: (), U: ()},
    Role.INA: {R: (6, 9, 10), W: (10,), U: (10,)},
    Role.PATIENT: {R: tuple(range(1, 11)), W: (1, 2, 4, 9), U: (1, 2, 4, 9)},
}


def grants_for(role: Role) -> list[PolicyRule]:
    rules = []
    by_records: dict[frozenset[str], set[OperationKind]] = {}
    for op, nums in MATRIX[role].items():
        if nums:
            by_records.setdefault(hrs(*nums), set()).add(op)
    for records, ops in sorted(by_records.items(), key=lambda kv: sorted(kv[0])):
        rules.append(PolicyRule(frozenset({role}), frozenset(ops), records))
    return rules


def forbids_for(role: Role, ops: tuple[OperationKind, ...] = (R, W, U)) -> list[PolicyRule]:
    rules = []
    for op in ops:
        allowed = hrs(*MATRIX[role][op])
        denied = ALL_RECORDS - allowed
        if denied:
            rules.append(PolicyRule(frozenset({role}), frozenset({op}), denied))
    return rules


def build_policies() -> list[Policy]:
    notify_both = (
        ObligationTemplate(ObligationKind.NOTIFY_PATIENT, "patient"),
        ObligationTemplate(ObligationKind.NOTIFY_EMERGENCY_CONTACT, "emergency_contact"),
    )
    p1_rules = [PolicyRule(frozenset({Role.DOC}), frozenset({R, W}), ALL_RECORDS)]
    for role in (Role.NRS, Role.STF, Role.BLO, Role.RLT, Role.PLT, Role.PHR, Role.INA):
        readable = hrs(*MATRIX[role][R])
        p1_rules.append(PolicyRule(frozenset({role}), frozenset({R}), readable))

    return [
        Policy(
            policy_id="P1",
            description=(
                "Emergency access: treatment team doctors may read and write, and "
                "other team members may read, the patient's health records; the "
                "patient and the emergency contact are notified"
            ),
            effect=Verdict.PERMIT,
            priority=50,
            emergency_only=True,
            team_required=True,
            rules=tuple(p1_rules),
            obligations=notify_both,
        ),
        Policy(
            policy_id="P2",
            description=(
                "Emergency access: the registered emergency contact may read the "
                "patient's health records; the patient and the emergency contact "
                "are notified"
            ),
            effect=Verdict.PERMIT,
            priority=50,
            emergency_only=True,
            team_required=True,
            rules=(PolicyRule(frozenset({Role.EMC}), frozenset({R}), ALL_RECORDS),),
            obligations=notify_both,
        ),
        Policy(
            policy_id="P3",
            description="Treatment team doctors read all medical data and write visit notes, prescriptions, and medical history for their assigned patient",
            effect=Verdict.PERMIT,
            priority=10,
            team_required=True,
            rules=tuple(grants_for(Role.DOC)),
        ),
        Policy(
            policy_id="P4",
            description="Treatment team members (nurses, support staff, emergency contact, pharmacist) read their designated records; support staff maintain demographics",
            effect=Verdict.PERMIT,
            priority=10,
            team_required=True,
            rules=tuple(
                grants_for(Role.NRS) + grants_for(Role.STF) + grants_for(Role.EMC) + grants_for(Role.PHR)
            ),
        ),
        Policy(
            policy_id="P5",
            description="Lab technicians read and write the test results in their own lab's scope and nothing else",
            effect=Verdict.PERMIT,
            priority=10,
            team_required=True,
            rules=tuple(grants_for(Role.PLT) + grants_for(Role.RLT)),
            forbids=tuple(forbids_for(Role.PLT) + forbids_for(Role.RLT)),
        ),
        Policy(
            policy_id="P6",
            description="Assigned billing officers read and write billing and payer records and no healthcare records",
            effect=Verdict.PERMIT,
            priority=10,
            team_required=True,
            rules=tuple(grants_for(Role.BLO)),
            forbids=tuple(forbids_for(Role.BLO)),
        ),
        Policy(
            policy_id="P7",
            description=(
                "Assigned insurance agents read prescriptions and billing/payer "
                "records and write payer transactions; they touch no other medical "
                "records, and claim payment information is shared with the patient"
            ),
            effect=Verdict.PERMIT,
            priority=10,
            team_required=True,
            rules=tuple(grants_for(Role.INA)),
            forbids=tuple(forbids_for(Role.INA)),
            obligations=(
                ObligationTemplate(
                    ObligationKind.SHARE_CLAIM_INFO, "patient", records=hrs(9, 10)
                ),
            ),
        ),
        Policy(
            policy_id="P8",
            description=(
                "A patient reads all of their own records and maintains their "
                "demographic, history, allergy, and billing entries, but writes "
                "no other medical records"
            ),
            effect=Verdict.PERMIT,
            priority=10,
            owner_required=True,
            rules=tuple(grants_for(Role.PATIENT)),
            forbids=tuple(forbids_for(Role.PATIENT, ops=(W, U))),
        ),
        Policy(
            policy_id="P9",
            description="Recorded audit logs are immutable: nobody may write or update audit trail data",
            effect=Verdict.DENY,
            priority=90,
            rules=(PolicyRule(frozenset(Role), frozenset({W, U}), frozenset({"AUDIT_LOG"})),),
        ),
        Policy(
            policy_id="P10",
            description="Healthcare providers whose HIPAA/HITECH training has expired access no patient data until retrained",
            effect=Verdict.DENY,
            priority=100,
            training_gate=True,
            rules=(PolicyRule(PROVIDERS, ALL_OPS, ALL_RECORDS),),
        ),
    ]


PATIENTS = [
    ("PT1001", "Jordan", "1980-11-25", "+15306524342", "jordam@compliance.com"),
    ("PT1002", "Simon", "1982-10-15", "+15737524481", "simon@compliance.com"),
    ("PT1003", "Tatum", "1984-11-05", "+14324386527", "tatum@compliance.com"),
    ("PT1004", "Thomas", "1986-12-20", "+16609079598", "thomas@compliance.com"),
    ("PT1005", "David", "1975-05-09", "+15702917315", "david@compliance.com"),
    ("PT1006", "Alexander", "1978-01-27", "+16578059479", "alexander@compliance.com"),
    ("PT1007", "Sarah", "1970-09-28", "+12058912490", "sarah@compliance.com"),
    ("PT1008", "Ronald", "1979-03-15", "+13238648870", "ronald@compliance.com"),
    ("PT1009", "Rebecca", "1985-12-25", "+14426746222", "rebecca@compliance.com"),
    ("PT1010", "Emma", "1995-10-15", "+16098632161", "emma@compliance.com"),
]

EMERGENCY_CONTACTS = [
    ("EC1001", "Olivia", "1992-11-04", "+15135030830", "olivia@service.info", "PT1001", "Sister"),
    ("EC1002", "Isabella", "1972-12-28", "+12246579011", "isabella@service.info", "PT1002", "Aunt"),
    ("EC1003", "Amelia", "1999-07-01", "+15166694568", "amelia@service.info", "PT1003", "Mother"),
    ("EC1004", "Alice", "1998-12-25", "+12164898791", "alice@service.info", "PT1004", "Spouse"),
    ("EC1005", "Eleanor", "1990-09-11", "+14305361691", "eleanor@service.info", "PT1005", "Spouse"),
    ("EC1006", "Benjamin", "1980-10-07", "+15772628573", "benjamin@service.info", "PT1006", "Friend"),
    ("EC1007", "Theodore", "1992-06-28", "+15646892293", "theodore@service.info", "PT1007", "Son"),
    ("EC1008", "Henry", "1982-08-06", "+15416532424", "henry@service.info", "PT1008", "Brother"),
    ("EC1009", "Arthur", "1994-12-10", "+16025371089", "arthur@service.info", "PT1009", "Brother"),
    ("EC1010", "Liam", "1987-02-10", "+13217057450", "liam@service.info", "PT1010", "Cousin"),
]

PROVIDER_ROWS = [
    ("PR1001", "Andrew", "1992-11-04", "DOC", "+14016296781", "andrew@hospital.com"),
    ("PR1002", "Sophia", "1972-12-28", "DOC", "+16805970987", "sophia@hospital.com"),
    ("PR1003", "Linda", "1999-07-01", "DOC", "+12522173068", "linda@hospital.com"),
    ("PR1004", "Oscar", "1998-12-25", "NRS", "+12488860746", "oscar@hospital.com"),
    ("PR1005", "William", "1990-09-11", "NRS", "+18026758468", "william@hospital.com"),
    ("PR1006", "Damien", "1980-10-07", "STF", "+13194615516", "damien@hospital.com"),
    ("PR1007", "Douglas", "1992-06-28", "STF", "+18597638767", "douglas@hospital.com"),
    ("PR1008", "Robert", "1982-08-06", "RLT", "+18502557057", "robert@hospital.com"),
    ("PR1009", "Victoria", "1994-12-10", "PLT", "+12837975034", "victoria@hospital.com"),
    ("PR1010", "James", "1987-02-10", "BLO", "+17712104375", "james@hospital.com"),
]
TRAINING_EXPIRY = "2027-06-30"

PHARMACISTS = [
    ("PHR1001", "Justin", "1984-12-12", "+12564014540", "justin@evergreen.phar", "EverGreen Pharmacy"),
    ("PHR1002", "Madison", "1977-07-15", "+15134414566", "madison@bluesky.drug", "BlueSky Pharmacy"),
]

INSURANCE_AGENTS = [
    ("ICA1001", "Jasper", "1955-09-21", "+13524606592", "jasper@antheplan.org", "Anthem Health Plan"),
    ("ICA1002", "Hanan", "1985-02-17", "+18189025033", "hanan@care.care", "Care Health Insurance"),
]

RECORD_ROWS = [
    ("HR1001", "Demographic Info", "demographic"),
    ("HR1002", "Previous Medical History", "medical"),
    ("HR1003", "Immunizations", "medical"),
    ("HR1004", "Allergies", "medical"),
    ("HR1005", "Visit Notes", "medical"),
    ("HR1006", "Medications and Prescription", "medical"),
    ("HR1007", "Pathology Lab Works", "medical"),
    ("HR1008", "Radiology Lab Works", "medical"),
    ("HR1009", "Billing and Insurance", "financial"),
    ("HR1010", "Payer Transactions", "financial"),
]


def write_jsonl(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        "\n".join(json.dumps(r, sort_keys=True, separators=(",", ":")) for r in rows) + "\n",
        encoding="utf-8",
    )


def write_fixtures() -> None:
    write_jsonl(
        FIXTURES / "patients.jsonl",
        [
            {
                "subject_id": sid, "display_name": name, "role": "PATIENT",
                "date_of_birth": dob, "phone": phone, "email": email,
            }
            for sid, name, dob, phone, email in PATIENTS
        ],
    )
    write_jsonl(
        FIXTURES / "emergency_contacts.jsonl",
        [
            {
                "subject_id": sid, "display_name": name, "role": "EMC",
                "date_of_birth": dob, "phone": phone, "email": email,
                "patient_id": patient, "relationship": rel,
            }
            for sid, name, dob, phone, email, patient, rel in EMERGENCY_CONTACTS
        ],
    )
    write_jsonl(
        FIXTURES / "providers.jsonl",
        [
            {
                "subject_id": sid, "display_name": name, "role": role,
                "date_of_birth": dob, "phone": phone, "email": email,
                "training_expiry": TRAINING_EXPIRY,
            }
            for sid, name, dob, role, phone, email in PROVIDER_ROWS
        ],
    )
    write_jsonl(
        FIXTURES / "pharmacists.jsonl",
        [
            {
                "subject_id": sid, "display_name": name, "role": "PHR",
                "date_of_birth": dob, "phone": phone, "email": email, "company": company,
            }
            for sid, name, dob, phone, email, company in PHARMACISTS
        ],
    )
    write_jsonl(
        FIXTURES / "insurance_agents.jsonl",
        [
            {
                "subject_id": sid, "display_name": name, "role": "INA",
                "date_of_birth": dob, "phone": phone, "email": email, "company": company,
            }
            for sid, name, dob, phone, email, company in INSURANCE_AGENTS
        ],
    )
    write_jsonl(
        FIXTURES / "records.jsonl",
        [
            {
                "record_id": rid, "record_name": name,
                "owner_patient_id": "PT1001", "sensitivity_class": sens,
            }
            for rid, name, sens in RECORD_ROWS
        ],
    )
    write_jsonl(FIXTURES / "policies.jsonl", [p.to_json_dict() for p in build_policies()])

    genesis = {"chainId": 12345, "period": 15, "sealers": ["SEALER-1", "SEALER-2", "SEALER-3"], "maxTx": 8}
    (DATA / "genesis.json").write_text(json.dumps(genesis, sort_keys=True, indent=2) + "\n", encoding="utf-8")


# --- Scenario scripts -------------------------------------------------------

TEAM_PT1001 = {
    "DOC": ["PR1001"], "NRS": ["PR1004"], "STF": ["PR1006"], "BLO": ["PR1010"],
    "RLT": ["PR1008"], "PLT": ["PR1009"], "PHR": ["PHR1001"], "INA": ["ICA1001"],
}
MEMBER_OF = {
    Role.DOC: "PR1001", Role.NRS: "PR1004", Role.STF: "PR1006", Role.BLO: "PR1010",
    Role.RLT: "PR1008", Role.PLT: "PR1009", Role.EMC: "EC1001", Role.PHR: "PHR1001",
    Role.INA: "ICA1001", Role.PATIENT: "PT1001",
}


def consents_per_matrix(roles: list[Role]) -> list[dict]:
    consents = []
    for role in roles:
        subject = MEMBER_OF[role]
        for op, nums in MATRIX[role].items():
            if not nums or role is Role.PATIENT:
                continue
            consents.append(
                {
                    "consent_id": f"IC-{subject}-{op.value}",
                    "grantees": [subject],
                    "objects": sorted(hrs(*nums)),
                    "operations": [op.value],
                }
            )
    return consents


def setup_steps(consents: list[dict]) -> list[dict]:
    return [
        {"cmd": "create_team", "patient": "PT1001", "pools": TEAM_PT1001},
        {"cmd": "create_ppa", "patient": "PT1001", "consents": consents},
        {"cmd": "deploy_consents", "patient": "PT1001"},
    ]


def full_consents(subject: str, records: list[str], operations: list[str], cid: str | None = None) -> dict:
    return {
        "consent_id": cid or f"IC-{subject}-ALL",
        "grantees": [subject],
        "objects": records,
        "operations": operations,
    }


ALL_HR = sorted(ALL_RECORDS)


def write_scenarios() -> None:
    SCENARIOS.mkdir(parents=True, exist_ok=True)

    # Full permission-matrix sweep: every role x record x operation.
    team_roles = [Role.DOC, Role.NRS, Role.STF, Role.BLO, Role.RLT, Role.PLT, Role.EMC, Role.PHR, Role.INA]
    steps = setup_steps(consents_per_matrix(team_roles))
    for role in team_roles + [Role.PATIENT]:
        subject = MEMBER_OF[role]
        for record_num in range(1, 11):
            for op in (R, W, U):
                steps.append(
                    {"cmd": "access", "subject": subject, "operation": op.value, "object": HR[record_num]}
                )
    write_jsonl(SCENARIOS / "table-vi-matrix.jsonl", steps)

    # Tamper demo: clean verification first, then a post-anchor bit flip.
    steps = setup_steps([full_consents("PR1001", ALL_HR, ["READ"], "IC-PR1001-R")])
    for record_num in (1, 2, 5):
        steps.append({"cmd": "access", "subject": "PR1001", "operation": "READ", "object": HR[record_num]})
    steps.append({"cmd": "verify", "subject": "PR1001"})
    steps.append({"cmd": "tamper", "height": 0, "tx_index": 0, "field": "object_id", "bit": 1})
    steps.append({"cmd": "verify", "subject": "PR1001"})
    write_jsonl(SCENARIOS / "tamper-demo.jsonl", steps)

    # P1: emergency team access; doctor writes beyond the routine write set.
    steps = setup_steps(
        [
            full_consents("PR1001", ALL_HR, ["READ", "WRITE", "UPDATE"], "IC-PR1001-ALL"),
            full_consents("PR1004", sorted(hrs(4, 5, 6)), ["READ"], "IC-PR1004-R"),
        ]
    )
    steps.append({"cmd": "access", "subject": "PR1001", "operation": "WRITE", "object": "HR1007"})
    steps.append({"cmd": "access", "subject": "PR1001", "operation": "WRITE", "object": "HR1007", "emergency": True})
    steps.append({"cmd": "access", "subject": "PR1004", "operation": "READ", "object": "HR1005", "emergency": True})
    write_jsonl(SCENARIOS / "p1-emergency-team.jsonl", steps)

    # P2: emergency contact reads beyond the routine read set during an emergency.
    steps = setup_steps([full_consents("EC1001", ALL_HR, ["READ"], "IC-EC1001-R")])
    steps.append({"cmd": "access", "subject": "EC1001", "operation": "READ", "object": "HR1002"})
    steps.append({"cmd": "access", "subject": "EC1001", "operation": "READ", "object": "HR1002", "emergency": True})
    write_jsonl(SCENARIOS / "p2-emergency-contact.jsonl", steps)

    # P3: team doctor routine read/write scope.
    steps = setup_steps(consents_per_matrix([Role.DOC]))
    steps.append({"cmd": "access", "subject": "PR1001", "operation": "READ", "object": "HR1005"})
    steps.append({"cmd": "access", "subject": "PR1001", "operation": "WRITE", "object": "HR1005"})
    steps.append({"cmd": "access", "subject": "PR1001", "operation": "WRITE", "object": "HR1009"})
    write_jsonl(SCENARIOS / "p3-doctor-scope.jsonl", steps)

    # P4: nurse and support staff read-only scopes.
    steps = setup_steps(consents_per_matrix([Role.NRS, Role.STF]))
    steps.append({"cmd": "access", "subject": "PR1004", "operation": "READ", "object": "HR1005"})
    steps.append({"cmd": "access", "subject": "PR1004", "operation": "WRITE", "object": "HR1005"})
    steps.append({"cmd": "access", "subject": "PR1006", "operation": "READ", "object": "HR1001"})
    steps.append({"cmd": "access", "subject": "PR1006", "operation": "READ", "object": "HR1005"})
    write_jsonl(SCENARIOS / "p4-nurse-staff.jsonl", steps)

    # P5: lab technicians inside and outside their lab scope.
    steps = setup_steps(consents_per_matrix([Role.PLT, Role.RLT]))
    steps.append({"cmd": "access", "subject": "PR1009", "operation": "WRITE", "object": "HR1007"})
    steps.append({"cmd": "access", "subject": "PR1009", "operation": "READ", "object": "HR1005"})
    steps.append({"cmd": "access", "subject": "PR1008", "operation": "READ", "object": "HR1008"})
    steps.append({"cmd": "access", "subject": "PR1008", "operation": "WRITE", "object": "HR1007"})
    write_jsonl(SCENARIOS / "p5-lab-techs.jsonl", steps)

    # P6: billing officer on billing records only.
    steps = setup_steps(consents_per_matrix([Role.BLO]))
    steps.append({"cmd": "access", "subject": "PR1010", "operation": "READ", "object": "HR1009"})
    steps.append({"cmd": "access", "subject": "PR1010", "operation": "WRITE", "object": "HR1010"})
    steps.append({"cmd": "access", "subject": "PR1010", "operation": "READ", "object": "HR1005"})
    write_jsonl(SCENARIOS / "p6-billing-officer.jsonl", steps)

    # P7: insurance agent claim reads share info with the patient; medical records stay closed.
    steps = setup_steps(consents_per_matrix([Role.INA]))
    steps.append({"cmd": "access", "subject": "ICA1001", "operation": "READ", "object": "HR1009"})
    steps.append({"cmd": "access", "subject": "ICA1001", "operation": "READ", "object": "HR1005"})
    steps.append({"cmd": "access", "subject": "ICA1001", "operation": "WRITE", "object": "HR1005"})
    write_jsonl(SCENARIOS / "p7-insurance-agent.jsonl", steps)

    # P8: the patient's own read universe and limited write set.
    steps = setup_steps(consents_per_matrix([Role.DOC]))
    steps.append({"cmd": "access", "subject": "PT1001", "operation": "READ", "object": "HR1005"})
    steps.append({"cmd": "access", "subject": "PT1001", "operation": "WRITE", "object": "HR1001"})
    steps.append({"cmd": "access", "subject": "PT1001", "operation": "WRITE", "object": "HR1005"})
    write_jsonl(SCENARIOS / "p8-patient-self.jsonl", steps)

    # P9: audit log immutability, by policy and by tamper evidence.
    steps = setup_steps([full_consents("PR1001", ALL_HR, ["READ"], "IC-PR1001-R")])
    steps.append({"cmd": "access", "subject": "PR1001", "operation": "WRITE", "object": "AUDIT_LOG"})
    steps.append({"cmd": "access", "subject": "PR1001", "operation": "READ", "object": "HR1005"})
    steps.append({"cmd": "tamper", "height": 0, "tx_index": 0, "field": "subject_id", "bit": 2})
    steps.append({"cmd": "verify", "subject": "PR1001"})
    write_jsonl(SCENARIOS / "p9-audit-immutability.jsonl", steps)

    # P10: training expiry gate; the same doctor read flips to deny after expiry.
    steps = setup_steps([full_consents("PR1001", ALL_HR, ["READ"], "IC-PR1001-R")])
    steps.append({"cmd": "access", "subject": "PR1001", "operation": "READ", "object": "HR1005"})
    steps.append({"cmd": "advance_clock", "to": "2027-07-02T09:00:00+00:00"})
    steps.append({"cmd": "access", "subject": "PR1001", "operation": "READ", "object": "HR1005"})
    write_jsonl(SCENARIOS / "p10-training-expiry.jsonl", steps)


if __name__ == "__main__":
    write_fixtures()
    write_scenarios()
    print(f"fixtures -> {FIXTURES}")
    print(f"scenarios -> {SCENARIOS}")
