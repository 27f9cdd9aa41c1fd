"""Contract-based access control: repositories, decision point, enforcement point.

Policies are data, not code. Each carries grant rules (its stated effect)
and may carry forbid rules for the prohibitions its text imposes; any
matching forbid contributes a deny. Combining is deny-overrides with
default deny, and a provider whose training has lapsed is denied before
anything else can permit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date
from typing import Any, Callable, Iterable, Mapping, Optional, Protocol, Sequence

from .anchors import AnchorRegistry
from .auditchain import AuditChain, AuditTransaction
from .canonical import canonical_serialize, digest, hexdigest, sign, verify
from .domain import (
    AccessDecision,
    AccessRequest,
    ComplianceStatus,
    ConsentLedgerError,
    EnvironmentContext,
    HealthRecordDescriptor,
    Obligation,
    ObligationKind,
    OperationKind,
    PROVIDER_ROLES,
    Role,
    SubjectProfile,
    Verdict,
    Weekday,
)

ALL_OPERATIONS = frozenset(OperationKind)
ALL_ROLES = frozenset(Role)


class SchemaViolation(ConsentLedgerError):
    pass


class DuplicateId(ConsentLedgerError):
    pass


class UnknownSubject(ConsentLedgerError):
    pass


class UnknownObject(ConsentLedgerError):
    pass


@dataclass(frozen=True)
class PolicyRule:
    roles: frozenset[Role]
    operations: frozenset[OperationKind]
    records: frozenset[str]

    def matches(self, role: Role, operation: OperationKind, object_id: str) -> bool:
        return role in self.roles and operation in self.operations and object_id in self.records


@dataclass(frozen=True)
class ObligationTemplate:
    kind: ObligationKind
    target: str  # "patient" | "emergency_contact" | "requester"
    roles: Optional[frozenset[Role]] = None
    records: Optional[frozenset[str]] = None

    def applies(self, role: Role, object_id: str) -> bool:
        if self.roles is not None and role not in self.roles:
            return False
        if self.records is not None and object_id not in self.records:
            return False
        return True


@dataclass(frozen=True)
class Policy:
    policy_id: str
    description: str
    effect: Verdict
    priority: int = 0
    emergency_only: bool = False
    team_required: bool = False
    owner_required: bool = False
    training_gate: bool = False
    rules: tuple[PolicyRule, ...] = ()
    forbids: tuple[PolicyRule, ...] = ()
    obligations: tuple[ObligationTemplate, ...] = ()

    def to_json_dict(self) -> dict[str, Any]:
        def rule_dict(rule: PolicyRule) -> dict[str, Any]:
            return {
                "roles": sorted(r.value for r in rule.roles),
                "operations": sorted(o.value for o in rule.operations),
                "records": sorted(rule.records),
            }

        def obligation_dict(t: ObligationTemplate) -> dict[str, Any]:
            out: dict[str, Any] = {"kind": t.kind.value, "target": t.target}
            if t.roles is not None:
                out["roles"] = sorted(r.value for r in t.roles)
            if t.records is not None:
                out["records"] = sorted(t.records)
            return out

        return {
            "policy_id": self.policy_id,
            "description": self.description,
            "effect": self.effect.value,
            "priority": self.priority,
            "emergency_only": self.emergency_only,
            "team_required": self.team_required,
            "owner_required": self.owner_required,
            "training_gate": self.training_gate,
            "rules": [rule_dict(r) for r in self.rules],
            "forbids": [rule_dict(r) for r in self.forbids],
            "obligations": [obligation_dict(t) for t in self.obligations],
        }

    @classmethod
    def from_json_dict(cls, data: Mapping[str, Any]) -> "Policy":
        def parse_rule(raw: Mapping[str, Any]) -> PolicyRule:
            return PolicyRule(
                roles=frozenset(Role(r) for r in raw["roles"]),
                operations=frozenset(OperationKind(o) for o in raw["operations"]),
                records=frozenset(raw["records"]),
            )

        def parse_obligation(raw: Mapping[str, Any]) -> ObligationTemplate:
            return ObligationTemplate(
                kind=ObligationKind(raw["kind"]),
                target=raw["target"],
                roles=frozenset(Role(r) for r in raw["roles"]) if "roles" in raw else None,
                records=frozenset(raw["records"]) if "records" in raw else None,
            )

        try:
            return cls(
                policy_id=data["policy_id"],
                description=data["description"],
                effect=Verdict(data["effect"]),
                priority=int(data.get("priority", 0)),
                emergency_only=bool(data.get("emergency_only", False)),
                team_required=bool(data.get("team_required", False)),
                owner_required=bool(data.get("owner_required", False)),
                training_gate=bool(data.get("training_gate", False)),
                rules=tuple(parse_rule(r) for r in data.get("rules", ())),
                forbids=tuple(parse_rule(r) for r in data.get("forbids", ())),
                obligations=tuple(parse_obligation(t) for t in data.get("obligations", ())),
            )
        except (KeyError, ValueError) as exc:
            raise SchemaViolation(f"bad policy record: {exc}") from exc


# --- Versioned repositories ------------------------------------------------


class _VersionedStore:
    """Append-only versions per id; reads are as-of a timestamp."""

    def __init__(self, kind: str) -> None:
        self._kind = kind
        self._versions: dict[str, list[tuple[int, Any]]] = {}

    def register(self, entry_id: str, value: Any, at: int = 0) -> None:
        if entry_id in self._versions:
            raise DuplicateId(f"duplicate {self._kind} id: {entry_id}")
        self._versions[entry_id] = [(at, value)]

    def update(self, entry_id: str, value: Any, at: int) -> None:
        if entry_id not in self._versions:
            raise KeyError(entry_id)
        self._versions[entry_id].append((at, value))

    def get(self, entry_id: str, at: Optional[int] = None) -> Any:
        versions = self._versions.get(entry_id)
        if not versions:
            raise KeyError(entry_id)
        if at is None:
            return versions[-1][1]
        candidate = None
        for ts, value in versions:
            if ts <= at:
                candidate = value
        if candidate is None:
            raise KeyError(entry_id)
        return candidate

    def has(self, entry_id: str, at: Optional[int] = None) -> bool:
        try:
            self.get(entry_id, at)
            return True
        except KeyError:
            return False

    def ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._versions))

    def snapshot_at(self, at: Optional[int]) -> dict[str, Any]:
        out = {}
        for entry_id in self.ids():
            try:
                out[entry_id] = self.get(entry_id, at)
            except KeyError:
                continue
        return out


class AttributeRepository:
    """Subject and object attributes, versioned by registration time."""

    def __init__(self) -> None:
        self._subjects = _VersionedStore("subject")
        self._records = _VersionedStore("record")

    def register_subject(self, profile: SubjectProfile, at: int = 0) -> None:
        self._subjects.register(profile.subject_id, profile, at)

    def update_subject(self, profile: SubjectProfile, at: int) -> None:
        self._subjects.update(profile.subject_id, profile, at)

    def register_record(self, descriptor: HealthRecordDescriptor, at: int = 0) -> None:
        self._records.register(descriptor.record_id, descriptor, at)

    def update_record(self, descriptor: HealthRecordDescriptor, at: int) -> None:
        self._records.update(descriptor.record_id, descriptor, at)

    def subject(self, subject_id: str, at: Optional[int] = None) -> SubjectProfile:
        try:
            return self._subjects.get(subject_id, at)
        except KeyError:
            raise UnknownSubject(f"unknown subject: {subject_id}") from None

    def record(self, record_id: str, at: Optional[int] = None) -> HealthRecordDescriptor:
        try:
            return self._records.get(record_id, at)
        except KeyError:
            raise UnknownObject(f"unknown object: {record_id}") from None

    def has_subject(self, subject_id: str) -> bool:
        return self._subjects.has(subject_id)

    def has_record(self, record_id: str) -> bool:
        return self._records.has(record_id)

    def subject_ids(self) -> tuple[str, ...]:
        return self._subjects.ids()

    def record_ids(self) -> tuple[str, ...]:
        return self._records.ids()

    def subjects_at(self, at: Optional[int]) -> dict[str, SubjectProfile]:
        return self._subjects.snapshot_at(at)

    def records_at(self, at: Optional[int]) -> dict[str, HealthRecordDescriptor]:
        return self._records.snapshot_at(at)


class PolicyRepository:
    def __init__(self) -> None:
        self._policies = _VersionedStore("policy")

    def register(self, policy: Policy, at: int = 0) -> None:
        self._policies.register(policy.policy_id, policy, at)

    def update(self, policy: Policy, at: int) -> None:
        self._policies.update(policy.policy_id, policy, at)

    def get(self, policy_id: str, at: Optional[int] = None) -> Policy:
        return self._policies.get(policy_id, at)

    def policies_at(self, at: Optional[int] = None) -> tuple[Policy, ...]:
        snapshot = self._policies.snapshot_at(at)
        return tuple(
            sorted(snapshot.values(), key=lambda p: (-p.priority, p.policy_id))
        )

    def ids(self) -> tuple[str, ...]:
        return self._policies.ids()


class ResourceAccessPoint:
    """The single gateway through which object payloads are fetched."""

    def fetch(self, descriptor: HealthRecordDescriptor) -> str:
        tag = hexdigest(canonical_serialize(descriptor))[:12]
        return f"payload:{descriptor.record_id}:{descriptor.owner_patient_id}:{tag}"


# --- Consent/team wiring ----------------------------------------------------


class ConsentSource(Protocol):
    def query_consent(
        self,
        subject_id: str,
        operation: OperationKind,
        object_id: str,
        environment: EnvironmentContext,
        owner_patient_id: Optional[str] = None,
    ) -> Any: ...

    def team_for_patient(self, patient_id: str) -> Any: ...

    def emergency_contact_for(self, patient_id: str) -> Optional[str]: ...


@dataclass(frozen=True)
class AttributeBundle:
    subject: SubjectProfile
    record: HealthRecordDescriptor
    environment: EnvironmentContext


# --- Core policy evaluation --------------------------------------------------


@dataclass(frozen=True)
class PolicyOutcome:
    deny_ids: tuple[str, ...]
    permit_ids: tuple[str, ...]
    obligations: tuple[tuple[str, ObligationTemplate], ...]  # (policy_id, template)
    deny_reason: str = ""


def _training_lapsed(subject: SubjectProfile, environment: EnvironmentContext) -> bool:
    if subject.role not in PROVIDER_ROLES or subject.training_expiry is None:
        return False
    return subject.training_expiry < environment.calendar_date


def evaluate_policies(
    policies: Sequence[Policy],
    subject: SubjectProfile,
    operation: OperationKind,
    object_id: str,
    owner_patient_id: Optional[str],
    environment: EnvironmentContext,
    on_team: bool,
) -> PolicyOutcome:
    """Deny-overrides policy pass over grant and forbid rules.

    ``policies`` must already be priority-sorted (highest first) so the
    training gate and other high-priority denials are reported first.
    """
    deny_ids: list[str] = []
    permit_ids: list[str] = []
    obligations: list[tuple[str, ObligationTemplate]] = []
    deny_reason = ""

    for policy in policies:
        if any(rule.matches(subject.role, operation, object_id) for rule in policy.forbids):
            deny_ids.append(policy.policy_id)
            deny_reason = deny_reason or f"denied by {policy.policy_id}: {policy.description}"
            continue

        if policy.training_gate:
            if _training_lapsed(subject, environment) and any(
                rule.matches(subject.role, operation, object_id) for rule in policy.rules
            ):
                deny_ids.append(policy.policy_id)
                deny_reason = deny_reason or (
                    f"denied by {policy.policy_id}: HIPAA/HITECH training expired "
                    f"{subject.training_expiry}"
                )
            continue

        if policy.emergency_only and not environment.emergency_flag:
            continue
        if policy.team_required and not on_team:
            continue
        if policy.owner_required and subject.subject_id != owner_patient_id:
            continue
        if not any(rule.matches(subject.role, operation, object_id) for rule in policy.rules):
            continue

        if policy.effect is Verdict.DENY:
            deny_ids.append(policy.policy_id)
            deny_reason = deny_reason or f"denied by {policy.policy_id}: {policy.description}"
        else:
            permit_ids.append(policy.policy_id)
            for template in policy.obligations:
                if template.applies(subject.role, object_id):
                    obligations.append((policy.policy_id, template))

    return PolicyOutcome(
        deny_ids=tuple(deny_ids),
        permit_ids=tuple(permit_ids),
        obligations=tuple(obligations),
        deny_reason=deny_reason,
    )


# --- Snapshots for offline replay (auditors, oracles) ------------------------


@dataclass(frozen=True)
class DecisionSnapshot:
    """Attributes, policies, team rosters, and consent membership facts
    effective at one moment. Carries no record payloads."""

    policies: tuple[Policy, ...]
    subjects: Mapping[str, SubjectProfile]
    records: Mapping[str, HealthRecordDescriptor]
    teams: Mapping[str, Mapping[Role, str]]  # patient -> role -> member
    consent_facts: Mapping[str, tuple[str, frozenset[str], frozenset[str], frozenset[OperationKind]]]


def environment_to_dict(environment: EnvironmentContext) -> dict[str, Any]:
    return {
        "wall_clock": environment.wall_clock,
        "calendar_date": environment.calendar_date.isoformat(),
        "day_of_week": environment.day_of_week.value,
        "location_tag": environment.location_tag,
        "source_ip": environment.source_ip,
        "emergency_flag": environment.emergency_flag,
    }


def environment_from_dict(data: Mapping[str, Any]) -> EnvironmentContext:
    return EnvironmentContext(
        wall_clock=int(data["wall_clock"]),
        calendar_date=date.fromisoformat(data["calendar_date"]),
        day_of_week=Weekday(data["day_of_week"]),
        location_tag=data["location_tag"],
        source_ip=data["source_ip"],
        emergency_flag=bool(data["emergency_flag"]),
    )


def conditions_snapshot_json(environment: EnvironmentContext, consent_ids: Sequence[str]) -> str:
    return json.dumps(
        {"consent_ids": sorted(consent_ids), "environment": environment_to_dict(environment)},
        sort_keys=True,
        separators=(",", ":"),
    )


def parse_conditions_snapshot(snapshot: str) -> tuple[EnvironmentContext, tuple[str, ...]]:
    data = json.loads(snapshot)
    if not isinstance(data, dict) or "environment" not in data or "consent_ids" not in data:
        raise ValueError("conditions snapshot missing required keys")
    return environment_from_dict(data["environment"]), tuple(data["consent_ids"])


def _on_team_in_snapshot(snapshot: DecisionSnapshot, subject: SubjectProfile, owner: str) -> bool:
    roster = snapshot.teams.get(owner)
    return bool(roster) and roster.get(subject.role) == subject.subject_id


def evaluate_recorded_access(
    snapshot: DecisionSnapshot,
    subject_id: str,
    operation: OperationKind,
    object_id: str,
    conditions_snapshot: str,
    timestamp: int,
) -> tuple[bool, str]:
    """Re-run the decision semantics over a recorded access.

    Returns (compliant, detail). Compliant means the recorded access would
    be permitted by the policy set in force at the time, with a consent
    reference that covered it (unless the subject owned the record).
    """
    try:
        environment, consent_ids = parse_conditions_snapshot(conditions_snapshot)
    except (ValueError, KeyError, TypeError) as exc:
        return False, f"malformed conditions snapshot: {exc}"

    subject = snapshot.subjects.get(subject_id)
    if subject is None:
        return False, f"unknown subject {subject_id}"
    record = snapshot.records.get(object_id)
    if record is None:
        return False, f"unknown object {object_id}"

    owner = record.owner_patient_id
    outcome = evaluate_policies(
        snapshot.policies,
        subject,
        operation,
        object_id,
        owner,
        environment,
        on_team=_on_team_in_snapshot(snapshot, subject, owner),
    )
    if outcome.deny_ids:
        return False, outcome.deny_reason
    if not outcome.permit_ids:
        return False, "no applicable policy permits the access"
    if subject_id == owner:
        return True, "owner access under " + ",".join(outcome.permit_ids)
    if not consent_ids:
        return False, "no consent reference recorded"
    for consent_id in consent_ids:
        facts = snapshot.consent_facts.get(consent_id)
        if facts is None:
            return False, f"recorded consent {consent_id} does not exist"
        c_owner, grantees, objects, operations = facts
        if c_owner != owner or subject_id not in grantees:
            return False, f"recorded consent {consent_id} does not bind this access"
        if object_id not in objects or operation not in operations:
            return False, f"recorded consent {consent_id} does not cover this access"
    return True, "permitted under " + ",".join(outcome.permit_ids)


# --- The engine ---------------------------------------------------------------


@dataclass(frozen=True)
class EnforcementResult:
    decision: AccessDecision
    payload: Optional[str]
    transaction: AuditTransaction


class ContractAccessEngine:
    """PCAP, PCIP, PCDP, and PCEP over shared repositories.

    Decisions are pure given the fetched bundle; the consent query is the
    single stateful step (frequency counters). Every request through
    ``pcep_enforce`` emits exactly one audit transaction, permit or deny.
    """

    def __init__(
        self,
        *,
        attribute_repo: Optional[AttributeRepository] = None,
        policy_repo: Optional[PolicyRepository] = None,
        consent_source: Optional[ConsentSource] = None,
        audit_chain: Optional[AuditChain] = None,
        anchor_registry: Optional[AnchorRegistry] = None,
        keystore: Optional[Any] = None,
        clock: Optional[Callable[[], int]] = None,
        activity: Optional[Callable[[str, dict], None]] = None,
    ) -> None:
        self.attributes = attribute_repo or AttributeRepository()
        self.policies = policy_repo or PolicyRepository()
        self._consents = consent_source
        self._chain = audit_chain
        self._anchors = anchor_registry
        self._keystore = keystore
        self._clock = clock or (lambda: 0)
        self._activity = activity or (lambda action, detail: None)
        self._rap = ResourceAccessPoint()
        self._tx_seq = 0
        self.requests_enforced = 0
        self.transactions_emitted = 0

    # -- PCAP ------------------------------------------------------------

    def pcap_register(self, kind: str, payload: Any, at: Optional[int] = None) -> bytes:
        at = self._clock() if at is None else at
        entry_id = self._validated_entry(kind, payload)
        if kind == "subject":
            self.attributes.register_subject(payload, at)
        elif kind == "record":
            self.attributes.register_record(payload, at)
        else:
            self.policies.register(payload, at)
        entry_digest = digest(canonical_serialize(payload))
        if self._anchors is not None:
            self._anchors.relay_anchor(f"{kind}:{entry_id}", entry_digest, anchored_at=at)
        self._activity("pcap_register", {"kind": kind, "id": entry_id})
        return entry_digest

    def pcap_update(self, kind: str, payload: Any, at: Optional[int] = None) -> bytes:
        at = self._clock() if at is None else at
        entry_id = self._validated_entry(kind, payload)
        try:
            if kind == "subject":
                self.attributes.update_subject(payload, at)
            elif kind == "record":
                self.attributes.update_record(payload, at)
            else:
                self.policies.update(payload, at)
        except KeyError:
            raise SchemaViolation(f"cannot update unregistered {kind}: {entry_id}") from None
        self._activity("pcap_update", {"kind": kind, "id": entry_id})
        return digest(canonical_serialize(payload))

    @staticmethod
    def _validated_entry(kind: str, payload: Any) -> str:
        if kind == "subject":
            if not isinstance(payload, SubjectProfile):
                raise SchemaViolation("subject payload must be a SubjectProfile")
            if payload.role in PROVIDER_ROLES and payload.training_expiry is None:
                raise SchemaViolation(
                    f"provider {payload.subject_id} has no HIPAA/HITECH training expiry"
                )
            return payload.subject_id
        if kind == "record":
            if not isinstance(payload, HealthRecordDescriptor):
                raise SchemaViolation("record payload must be a HealthRecordDescriptor")
            if not payload.owner_patient_id:
                raise SchemaViolation(f"record {payload.record_id} has no owner")
            return payload.record_id
        if kind == "policy":
            if not isinstance(payload, Policy):
                raise SchemaViolation("policy payload must be a Policy")
            return payload.policy_id
        raise SchemaViolation(f"unknown registry kind: {kind}")

    # -- PCIP ------------------------------------------------------------

    def pcip_fetch(
        self, subject_id: str, object_id: str, environment: EnvironmentContext
    ) -> AttributeBundle:
        return AttributeBundle(
            subject=self.attributes.subject(subject_id, at=environment.wall_clock),
            record=self.attributes.record(object_id, at=environment.wall_clock),
            environment=environment,
        )

    # -- PCDP ------------------------------------------------------------

    def pcdp_decide(self, request: AccessRequest) -> AccessDecision:
        environment = request.environment
        policies = self.policies.policies_at(environment.wall_clock)

        try:
            subject = self.attributes.subject(request.subject_id, at=environment.wall_clock)
        except UnknownSubject:
            return AccessDecision(verdict=Verdict.DENY, reason=f"unknown subject {request.subject_id}")

        try:
            bundle = self.pcip_fetch(request.subject_id, request.object_id, environment)
        except UnknownObject:
            # No descriptor to evaluate against; only literal forbid/deny
            # rules (e.g. the audit-log protection policy) can still name
            # the object directly.
            outcome = evaluate_policies(
                policies, subject, request.operation, request.object_id,
                owner_patient_id=None, environment=environment, on_team=False,
            )
            if outcome.deny_ids:
                return AccessDecision(
                    verdict=Verdict.DENY,
                    matched_policy_ids=outcome.deny_ids,
                    reason=outcome.deny_reason,
                )
            return AccessDecision(verdict=Verdict.DENY, reason=f"unknown object {request.object_id}")

        owner = bundle.record.owner_patient_id
        outcome = evaluate_policies(
            policies,
            bundle.subject,
            request.operation,
            request.object_id,
            owner,
            environment,
            on_team=self._on_team(bundle.subject, owner),
        )
        if outcome.deny_ids:
            return AccessDecision(
                verdict=Verdict.DENY,
                matched_policy_ids=outcome.deny_ids,
                reason=outcome.deny_reason,
            )
        if not outcome.permit_ids:
            return AccessDecision(verdict=Verdict.DENY, reason="no applicable policy permits the access")

        consent_ids: tuple[str, ...] = ()
        if bundle.subject.subject_id != owner:
            if self._consents is None:
                return AccessDecision(verdict=Verdict.DENY, reason="no consent source configured")
            answer = self._consents.query_consent(
                request.subject_id,
                request.operation,
                request.object_id,
                environment,
                owner_patient_id=owner,
            )
            if not answer.satisfied:
                return AccessDecision(
                    verdict=Verdict.DENY,
                    matched_policy_ids=outcome.permit_ids,
                    reason=f"consent not satisfied: {answer.reason}",
                )
            consent_ids = (answer.consent_id,)

        obligations = tuple(
            Obligation(
                kind=template.kind,
                target_subject_id=self._obligation_target(template, bundle.subject, owner),
                triggering_policy_id=policy_id,
            )
            for policy_id, template in outcome.obligations
        )
        return AccessDecision(
            verdict=Verdict.PERMIT,
            matched_policy_ids=outcome.permit_ids,
            matched_consent_ids=consent_ids,
            obligations=obligations,
            reason="permitted by " + ",".join(outcome.permit_ids),
        )

    def _on_team(self, subject: SubjectProfile, owner_patient_id: str) -> bool:
        if self._consents is None:
            return False
        team = self._consents.team_for_patient(owner_patient_id)
        return team is not None and team.has_member(subject.role, subject.subject_id)

    def _obligation_target(
        self, template: ObligationTemplate, subject: SubjectProfile, owner_patient_id: str
    ) -> str:
        if template.target == "patient":
            return owner_patient_id
        if template.target == "emergency_contact":
            contact = None
            if self._consents is not None:
                contact = self._consents.emergency_contact_for(owner_patient_id)
            return contact or owner_patient_id
        return subject.subject_id

    # -- PCEP ------------------------------------------------------------

    def pcep_enforce(self, request: AccessRequest) -> EnforcementResult:
        self.requests_enforced += 1
        decision = self._ingress_decision(request)
        payload: Optional[str] = None
        if decision.permitted:
            payload = self._rap.fetch(
                self.attributes.record(request.object_id, at=request.environment.wall_clock)
            )
        transaction = self._emit_transaction(request, decision)
        for obligation in decision.obligations:
            self._activity(
                "notification",
                {
                    "kind": obligation.kind.value,
                    "target": obligation.target_subject_id,
                    "policy": obligation.triggering_policy_id,
                },
            )
        return EnforcementResult(decision=decision, payload=payload, transaction=transaction)

    def _ingress_decision(self, request: AccessRequest) -> AccessDecision:
        try:
            subject = self.attributes.subject(request.subject_id)
        except UnknownSubject:
            return AccessDecision(verdict=Verdict.DENY, reason=f"unknown subject {request.subject_id}")
        if not verify(subject.public_key, request.signing_payload(), request.signature):
            return AccessDecision(verdict=Verdict.DENY, reason="signature verification failed")
        return self.pcdp_decide(request)

    def _emit_transaction(self, request: AccessRequest, decision: AccessDecision) -> AuditTransaction:
        self._tx_seq += 1
        snapshot = conditions_snapshot_json(request.environment, decision.matched_consent_ids)
        tx_id = hexdigest(
            b"tx|"
            + self._tx_seq.to_bytes(8, "big")
            + canonical_serialize(
                (request.subject_id, request.operation, request.object_id, snapshot)
            )
        )
        element_bytes = AuditTransaction.elements_to_bytes(
            request.subject_id,
            request.operation,
            request.object_id,
            snapshot,
            request.environment.wall_clock,
        )
        signature = b""
        if self._keystore is not None and self._keystore.has(request.subject_id):
            signature = sign(self._keystore.private_key(request.subject_id), element_bytes)
        tx = AuditTransaction(
            tx_id=tx_id,
            subject_id=request.subject_id,
            operation=request.operation,
            object_id=request.object_id,
            conditions_snapshot=snapshot,
            timestamp=request.environment.wall_clock,
            compliance_status=ComplianceStatus.PENDING,
            submitter_signature=signature,
        )
        self.transactions_emitted += 1
        if self._chain is not None:
            self._chain.submit(tx)
        return tx

    # -- Offline views ------------------------------------------------------

    def decision_snapshot_at(self, at: Optional[int] = None) -> DecisionSnapshot:
        teams: Mapping[str, Mapping[Role, str]] = {}
        consent_facts: Mapping[str, Any] = {}
        if self._consents is not None:
            teams = getattr(self._consents, "team_memberships", dict)()
            consent_facts = getattr(self._consents, "consent_facts", dict)()
        return DecisionSnapshot(
            policies=self.policies.policies_at(at),
            subjects=self.attributes.subjects_at(at),
            records=self.attributes.records_at(at),
            teams=teams,
            consent_facts=consent_facts,
        )

    def static_deny_probe(self, subject_id: str, operation: OperationKind, object_id: str) -> Optional[str]:
        """Environment-independent prohibition check for the consent conflict
        oracle: does a registered forbid or unconditional deny rule cover the
        triple? Returns the denying policy id."""
        try:
            subject = self.attributes.subject(subject_id)
        except UnknownSubject:
            return None
        for policy in self.policies.policies_at(None):
            for rule in policy.forbids:
                if rule.matches(subject.role, operation, object_id):
                    return policy.policy_id
            if (
                policy.effect is Verdict.DENY
                and not policy.training_gate
                and not policy.emergency_only
                and any(rule.matches(subject.role, operation, object_id) for rule in policy.rules)
            ):
                return policy.policy_id
        return None
