"""Fixture tables and the deterministic keystore.

Fixture files are UTF-8 line-delimited JSON, one file per table, field
names matching the domain types. The keystore derives every identity's
key pair from the run seed, so two runs with the same seed sign
identically.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Iterator, Mapping, Optional

from .canonical import KeyPair, derive_keypair, sign
from .domain import (
    ConsentLedgerError,
    HealthRecordDescriptor,
    PROVIDER_ROLES,
    Role,
    SubjectProfile,
)
from .policy import Policy, SchemaViolation

SUBJECT_TABLES = (
    ("patients.jsonl", Role.PATIENT),
    ("providers.jsonl", None),
    ("emergency_contacts.jsonl", Role.EMC),
    ("pharmacists.jsonl", Role.PHR),
    ("insurance_agents.jsonl", Role.INA),
)
RECORDS_TABLE = "records.jsonl"
POLICIES_TABLE = "policies.jsonl"


class Keystore:
    """Seeded key pairs for fixture identities."""

    def __init__(self, seed: int = 0) -> None:
        self._seed = seed
        self._pairs: dict[str, KeyPair] = {}

    def register(self, subject_id: str) -> KeyPair:
        pair = derive_keypair(f"{self._seed}:{subject_id}")
        self._pairs[subject_id] = pair
        return pair

    def has(self, subject_id: str) -> bool:
        return subject_id in self._pairs

    def key_pair(self, subject_id: str) -> KeyPair:
        return self._pairs[subject_id]

    def public_key(self, subject_id: str) -> Optional[bytes]:
        pair = self._pairs.get(subject_id)
        return pair.public_key if pair else None

    def private_key(self, subject_id: str) -> bytes:
        return self._pairs[subject_id].private_key

    def sign_as(self, subject_id: str, message: bytes) -> bytes:
        return sign(self._pairs[subject_id].private_key, message)

    def subject_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._pairs))


@dataclass
class FixtureSet:
    subjects: dict[str, SubjectProfile]
    records: dict[str, HealthRecordDescriptor]
    policies: list[Policy]
    emergency_contact_of: dict[str, str]  # patient -> contact subject
    keystore: Keystore
    source_dir: Path

    def patients(self) -> list[SubjectProfile]:
        return [s for s in self.subjects.values() if s.role is Role.PATIENT]

    def role_pools(self) -> dict[Role, list[str]]:
        """Treatment-team candidate pools, one list per selectable role."""
        pools: dict[Role, list[str]] = {}
        for subject in self.subjects.values():
            if subject.role in (Role.PATIENT, Role.EMC):
                continue
            pools.setdefault(subject.role, []).append(subject.subject_id)
        for members in pools.values():
            members.sort()
        return pools


def default_fixture_dir() -> Path:
    return Path(__file__).resolve().parent / "data" / "fixtures"


def default_scenario_dir() -> Path:
    return Path(__file__).resolve().parent / "data" / "scenarios"


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict[str, Any]]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaViolation(f"missing fixture file: {path.name}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"{path.name}:{lineno}: not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise SchemaViolation(f"{path.name}:{lineno}: expected a JSON object")
        yield lineno, data


def _parse_date(raw: Any, context: str) -> date:
    try:
        return date.fromisoformat(raw)
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(f"{context}: malformed date {raw!r}") from exc


def _parse_subject(
    data: Mapping[str, Any], context: str, forced_role: Optional[Role]
) -> SubjectProfile:
    for name in ("subject_id", "display_name", "date_of_birth", "phone", "email"):
        if name not in data:
            raise SchemaViolation(f"{context}: missing field {name!r}")
    try:
        role = forced_role or Role(data["role"])
    except (KeyError, ValueError) as exc:
        raise SchemaViolation(f"{context}: bad role {data.get('role')!r}") from exc
    training_expiry = None
    if data.get("training_expiry") is not None:
        training_expiry = _parse_date(data["training_expiry"], context)
    if role in PROVIDER_ROLES and training_expiry is None:
        raise SchemaViolation(f"{context}: provider {data['subject_id']} lacks training_expiry")
    return SubjectProfile(
        subject_id=data["subject_id"],
        display_name=data["display_name"],
        role=role,
        date_of_birth=_parse_date(data["date_of_birth"], context),
        phone=data["phone"],
        email=data["email"],
        training_expiry=training_expiry,
    )


def load_fixtures(directory: Path | str, seed: int = 0) -> FixtureSet:
    directory = Path(directory)
    keystore = Keystore(seed)
    subjects: dict[str, SubjectProfile] = {}
    emergency_contact_of: dict[str, str] = {}

    for table, forced_role in SUBJECT_TABLES:
        path = directory / table
        for lineno, data in _iter_jsonl(path):
            context = f"{table}:{lineno}"
            profile = _parse_subject(data, context, forced_role)
            if profile.subject_id in subjects:
                raise SchemaViolation(f"{context}: duplicate subject id {profile.subject_id}")
            pair = keystore.register(profile.subject_id)
            subjects[profile.subject_id] = SubjectProfile(
                subject_id=profile.subject_id,
                display_name=profile.display_name,
                role=profile.role,
                date_of_birth=profile.date_of_birth,
                phone=profile.phone,
                email=profile.email,
                training_expiry=profile.training_expiry,
                public_key=pair.public_key,
            )
            if forced_role is Role.EMC:
                patient_id = data.get("patient_id")
                if not patient_id:
                    raise SchemaViolation(f"{context}: emergency contact lacks patient_id")
                emergency_contact_of[patient_id] = profile.subject_id

    records: dict[str, HealthRecordDescriptor] = {}
    for lineno, data in _iter_jsonl(directory / RECORDS_TABLE):
        context = f"{RECORDS_TABLE}:{lineno}"
        for name in ("record_id", "record_name", "owner_patient_id", "sensitivity_class"):
            if name not in data:
                raise SchemaViolation(f"{context}: missing field {name!r}")
        if data["record_id"] in records:
            raise SchemaViolation(f"{context}: duplicate record id {data['record_id']}")
        if data["owner_patient_id"] not in subjects:
            raise SchemaViolation(f"{context}: unknown owner {data['owner_patient_id']}")
        records[data["record_id"]] = HealthRecordDescriptor(
            record_id=data["record_id"],
            record_name=data["record_name"],
            owner_patient_id=data["owner_patient_id"],
            sensitivity_class=data["sensitivity_class"],
        )

    policies: list[Policy] = []
    seen_policy_ids: set[str] = set()
    for lineno, data in _iter_jsonl(directory / POLICIES_TABLE):
        policy = Policy.from_json_dict(data)
        if policy.policy_id in seen_policy_ids:
            raise SchemaViolation(f"{POLICIES_TABLE}:{lineno}: duplicate policy id {policy.policy_id}")
        seen_policy_ids.add(policy.policy_id)
        policies.append(policy)

    for patient_id in emergency_contact_of:
        if patient_id not in subjects:
            raise SchemaViolation(f"emergency contact references unknown patient {patient_id}")

    return FixtureSet(
        subjects=subjects,
        records=records,
        policies=policies,
        emergency_contact_of=emergency_contact_of,
        keystore=keystore,
        source_dir=directory,
    )
