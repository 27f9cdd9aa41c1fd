"""Patient-provider agreements, informed-consent contracts, and treatment teams.

The manager owns three stores: the PPA repository (with a component-wise
digest tree anchored at creation), the in-process consent contract ledger
(append-only, deterministic addresses), and the treatment-team roster.
Consent queries are stateful: frequency-limited consents consume per-grantee
usage counters and expire for a grantee once the limit is reached.
"""
from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field, replace
from datetime import date
from enum import Enum
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .anchors import AnchorRegistry
from .canonical import canonical_serialize, digest, hexdigest
from .domain import (
    AccessFrequencyLimit,
    Condition,
    ConsentLedgerError,
    EnvironmentContext,
    OperationKind,
    Role,
    TEAM_ROLES,
    condition_holds,
)


class IncompletePpa(ConsentLedgerError):
    pass


class PpaConflict(ConsentLedgerError):
    pass


class UnknownPpa(ConsentLedgerError):
    pass


class IncompleteConsent(ConsentLedgerError):
    pass


class TamperedPpa(ConsentLedgerError):
    pass


class NotOwner(ConsentLedgerError):
    pass


class UnknownConsent(ConsentLedgerError):
    pass


class IncompleteTeam(ConsentLedgerError):
    pass


class TeamConflict(ConsentLedgerError):
    pass


class PpaStatus(str, Enum):
    ACTIVE = "ACTIVE"
    EXPIRED = "EXPIRED"
    REVOKED = "REVOKED"


class ConsentStatus(str, Enum):
    ACTIVE = "ACTIVE"
    EXPIRED = "EXPIRED"
    REVOKED = "REVOKED"


class IntegrityStatus(str, Enum):
    INTACT = "INTACT"
    TAMPERED = "TAMPERED"


@dataclass(frozen=True)
class PatientComponents:
    personal: str
    contact: str
    mailing: str
    pharmacy: str
    billing_insurance: str
    emergency_contact_id: str


@dataclass(frozen=True)
class ProviderComponents:
    treatment_team_ref: str
    anonymous_research_sharing: bool
    prescription_routing: str


@dataclass(frozen=True)
class RegulatoryComponents:
    policy_bodies: tuple[str, ...]


@dataclass(frozen=True)
class InformedConsent:
    """The consent four-tuple: users, objects, operations, conditions.

    Sets may be empty at construction; completeness is judged when the
    consent is deployed as a contract, matching the deployment algorithm's
    per-entry rejection of incomplete components.
    """

    consent_id: str
    grantee_subject_ids: frozenset[str]
    object_ids: frozenset[str]
    operations: frozenset[OperationKind]
    conditions: tuple[Condition, ...] = ()

    def is_complete(self) -> bool:
        return bool(self.grantee_subject_ids) and bool(self.object_ids) and bool(self.operations)

    def frequency_limit(self) -> Optional[int]:
        limits = [c.max_count for c in self.conditions if isinstance(c, AccessFrequencyLimit)]
        return min(limits) if limits else None


@dataclass(frozen=True)
class PatientProviderAgreement:
    ppa_id: str
    patient_id: str
    pc: PatientComponents
    prc: ProviderComponents
    roc: RegulatoryComponents
    icc: tuple[InformedConsent, ...]
    component_digests: tuple[bytes, bytes, bytes, bytes]
    ppa_digest: bytes
    valid_from: date
    valid_until: date
    status: PpaStatus = PpaStatus.ACTIVE


def ppa_component_digests(
    pc: PatientComponents,
    prc: ProviderComponents,
    roc: RegulatoryComponents,
    icc: Sequence[InformedConsent],
) -> tuple[bytes, bytes, bytes, bytes]:
    return (
        digest(canonical_serialize(pc)),
        digest(canonical_serialize(prc)),
        digest(canonical_serialize(roc)),
        digest(canonical_serialize(tuple(icc))),
    )


def ppa_digest_from_components(component_digests: Sequence[bytes]) -> bytes:
    h_pc, h_prc, h_roc, h_icc = component_digests
    return digest(h_pc + h_prc + h_roc + h_icc)


@dataclass(frozen=True)
class TreatmentTeam:
    ptt_id: str
    patient_id: str
    members: tuple[tuple[Role, str], ...]  # sorted by role name
    ptt_digest: bytes = b""

    def member_map(self) -> dict[Role, str]:
        return dict(self.members)

    def has_member(self, role: Role, subject_id: str) -> bool:
        return dict(self.members).get(role) == subject_id


def team_digest(ptt_id: str, patient_id: str, members: tuple[tuple[Role, str], ...]) -> bytes:
    return digest(canonical_serialize((ptt_id, patient_id, members)))


@dataclass
class ConsentContract:
    """A deployed consent: terms plus on-ledger state."""

    terms: InformedConsent
    owner_patient_id: str
    contract_address: str
    status: ConsentStatus = ConsentStatus.ACTIVE
    usage_counters: dict[str, int] = field(default_factory=dict)

    def grantee_exhausted(self, grantee: str) -> bool:
        limit = self.terms.frequency_limit()
        return limit is not None and self.usage_counters.get(grantee, 0) >= limit


@dataclass(frozen=True)
class ConsentAnswer:
    satisfied: bool
    consent_id: Optional[str] = None
    reason: str = ""


@dataclass
class PatientLinks:
    ppa_ids: list[str] = field(default_factory=list)
    ptt_ids: list[str] = field(default_factory=list)
    contract_addresses: list[str] = field(default_factory=list)


# Probe signature: (subject_id, operation, object_id) -> denying policy id or None.
DenyProbe = Callable[[str, OperationKind, str], Optional[str]]


class ConsentManager:
    """Single-writer state machine over PPAs, consent contracts, and teams."""

    def __init__(
        self,
        *,
        anchor_registry: AnchorRegistry,
        emergency_contacts: Optional[Mapping[str, str]] = None,
        deny_probe: Optional[DenyProbe] = None,
        clock: Optional[Callable[[], int]] = None,
        activity: Optional[Callable[[str, dict], None]] = None,
    ) -> None:
        self._anchors = anchor_registry
        self._emergency_contacts = dict(emergency_contacts or {})
        self._deny_probe = deny_probe
        self._clock = clock or (lambda: 0)
        self._activity = activity or (lambda action, detail: None)
        self._lock = threading.Lock()
        self._ppas: dict[str, PatientProviderAgreement] = {}
        self._teams: dict[str, TreatmentTeam] = {}
        self._team_by_patient: dict[str, str] = {}
        self._contracts: dict[str, ConsentContract] = {}
        self._address_by_consent: dict[str, str] = {}
        self._links: dict[str, PatientLinks] = {}
        self._contract_nonce = 0

    # -- wiring ------------------------------------------------------

    def set_deny_probe(self, probe: DenyProbe) -> None:
        self._deny_probe = probe

    def register_emergency_contact(self, patient_id: str, contact_id: str) -> None:
        self._emergency_contacts[patient_id] = contact_id

    def emergency_contact_for(self, patient_id: str) -> Optional[str]:
        return self._emergency_contacts.get(patient_id)

    def links_for(self, patient_id: str) -> PatientLinks:
        return self._links.setdefault(patient_id, PatientLinks())

    # -- PPA lifecycle -------------------------------------------------

    def create_ppa(
        self,
        patient_id: str,
        pc: Optional[PatientComponents],
        prc: Optional[ProviderComponents],
        roc: Optional[RegulatoryComponents],
        icc: Sequence[InformedConsent],
        valid_from: date,
        valid_until: date,
    ) -> PatientProviderAgreement:
        if pc is None or prc is None or roc is None or not icc:
            raise IncompletePpa("incomplete PPA: all four component groups are required")
        if valid_from > valid_until:
            raise IncompletePpa("incomplete PPA: validity window is inverted")

        icc = tuple(icc)
        self._check_ppa_conflicts(icc)

        with self._lock:
            serial = sum(1 for p in self._ppas.values() if p.patient_id == patient_id) + 1
            ppa_id = f"PPA-{patient_id}-{serial}"
            component_digests = ppa_component_digests(pc, prc, roc, icc)
            ppa = PatientProviderAgreement(
                ppa_id=ppa_id,
                patient_id=patient_id,
                pc=pc,
                prc=prc,
                roc=roc,
                icc=icc,
                component_digests=component_digests,
                ppa_digest=ppa_digest_from_components(component_digests),
                valid_from=valid_from,
                valid_until=valid_until,
            )
            self._ppas[ppa_id] = ppa
            self.links_for(patient_id).ppa_ids.append(ppa_id)
        self._anchors.relay_anchor(f"ppa:{ppa_id}", ppa.ppa_digest, anchored_at=self._clock())
        self._activity("ppa_created", {"ppa_id": ppa_id, "patient_id": patient_id})
        return ppa

    def _check_ppa_conflicts(self, icc: Sequence[InformedConsent]) -> None:
        seen_ids = set(self._address_by_consent)
        for ppa in self._ppas.values():
            seen_ids.update(c.consent_id for c in ppa.icc)
        for consent in icc:
            if consent.consent_id in seen_ids:
                raise PpaConflict(f"contains conflicts: duplicate consent id {consent.consent_id}")
            seen_ids.add(consent.consent_id)
            if self._deny_probe is None:
                continue
            for grantee in sorted(consent.grantee_subject_ids):
                for obj in sorted(consent.object_ids):
                    for op in sorted(consent.operations, key=lambda o: o.value):
                        denier = self._deny_probe(grantee, op, obj)
                        if denier is not None:
                            raise PpaConflict(
                                "contains conflicts: "
                                f"{consent.consent_id} grants ({grantee}, {op.value}, {obj}) "
                                f"while {denier} forbids it"
                            )

    def get_ppa(self, ppa_id: str) -> PatientProviderAgreement:
        try:
            return self._ppas[ppa_id]
        except KeyError:
            raise UnknownPpa(f"unknown PPA: {ppa_id}") from None

    def latest_ppa_for(self, patient_id: str) -> Optional[PatientProviderAgreement]:
        ids = self.links_for(patient_id).ppa_ids
        return self._ppas[ids[-1]] if ids else None

    def verify_ppa_integrity(self, ppa_id: str) -> IntegrityStatus:
        ppa = self.get_ppa(ppa_id)
        anchored = self._anchors.lookup(f"ppa:{ppa_id}")
        recomputed = ppa_digest_from_components(
            ppa_component_digests(ppa.pc, ppa.prc, ppa.roc, ppa.icc)
        )
        return IntegrityStatus.INTACT if recomputed == anchored else IntegrityStatus.TAMPERED

    def overwrite_ppa(self, ppa: PatientProviderAgreement) -> None:
        """Replace a stored PPA without re-anchoring. Simulates out-of-band
        repository tampering; the normal API never mutates stored PPAs."""
        if ppa.ppa_id not in self._ppas:
            raise UnknownPpa(f"unknown PPA: {ppa.ppa_id}")
        self._ppas[ppa.ppa_id] = ppa

    # -- consent contracts ---------------------------------------------

    def deploy_consent_contracts(self, ppa_id: str) -> tuple[str, ...]:
        ppa = self.get_ppa(ppa_id)
        if self.verify_ppa_integrity(ppa_id) is not IntegrityStatus.INTACT:
            raise TamperedPpa(f"PPA digest mismatch, refusing deployment: {ppa_id}")

        deployed: list[str] = []
        rejected: list[str] = []
        with self._lock:
            for consent in ppa.icc:
                if not consent.is_complete():
                    rejected.append(consent.consent_id)
                    self._activity(
                        "consent_rejected",
                        {"consent_id": consent.consent_id, "reason": "incomplete informed consent component"},
                    )
                    continue
                existing = self._address_by_consent.get(consent.consent_id)
                if existing is not None:
                    deployed.append(existing)
                    continue
                self._contract_nonce += 1
                address = "0x" + hexdigest(
                    b"contract|"
                    + canonical_serialize(consent)
                    + ppa.patient_id.encode("utf-8")
                    + self._contract_nonce.to_bytes(8, "big")
                )[:40]
                self._contracts[address] = ConsentContract(
                    terms=consent,
                    owner_patient_id=ppa.patient_id,
                    contract_address=address,
                )
                self._address_by_consent[consent.consent_id] = address
                self.links_for(ppa.patient_id).contract_addresses.append(address)
                deployed.append(address)
                self._activity(
                    "consent_deployed",
                    {"consent_id": consent.consent_id, "address": address, "owner": ppa.patient_id},
                )
        if rejected and not deployed:
            raise IncompleteConsent(
                "incomplete informed consent component: " + ", ".join(rejected)
            )
        return tuple(deployed)

    def contract_at(self, address: str) -> ConsentContract:
        try:
            return self._contracts[address]
        except KeyError:
            raise UnknownConsent(f"no contract at address: {address}") from None

    def contract_for_consent(self, consent_id: str) -> ConsentContract:
        address = self._address_by_consent.get(consent_id)
        if address is None:
            raise UnknownConsent(f"unknown consent: {consent_id}")
        return self._contracts[address]

    def consent_facts(self) -> dict[str, tuple[str, frozenset[str], frozenset[str], frozenset[OperationKind]]]:
        """Membership facts per deployed consent id: (owner, grantees, objects, operations).

        Auditors use this view; it exposes no record payloads and no conditions.
        """
        facts = {}
        for contract in self._contracts.values():
            t = contract.terms
            facts[t.consent_id] = (
                contract.owner_patient_id,
                t.grantee_subject_ids,
                t.object_ids,
                t.operations,
            )
        return facts

    # -- consent queries -------------------------------------------------

    def query_consent(
        self,
        subject_id: str,
        operation: OperationKind,
        object_id: str,
        environment: EnvironmentContext,
        owner_patient_id: Optional[str] = None,
    ) -> ConsentAnswer:
        with self._lock:
            failure: Optional[str] = None
            for address in sorted(self._contracts):
                contract = self._contracts[address]
                terms = contract.terms
                if owner_patient_id is not None and contract.owner_patient_id != owner_patient_id:
                    continue
                if subject_id not in terms.grantee_subject_ids:
                    continue
                if operation not in terms.operations or object_id not in terms.object_ids:
                    continue
                if contract.grantee_exhausted(subject_id):
                    failure = failure or f"{terms.consent_id}: access frequency limit exhausted"
                    continue
                if contract.status is not ConsentStatus.ACTIVE:
                    failure = failure or f"{terms.consent_id}: consent {contract.status.value.lower()}"
                    continue
                reason = self._condition_failure(contract, subject_id, environment)
                if reason is not None:
                    failure = failure or f"{terms.consent_id}: {reason}"
                    continue
                contract.usage_counters[subject_id] = contract.usage_counters.get(subject_id, 0) + 1
                if contract.terms.frequency_limit() is not None and all(
                    contract.grantee_exhausted(g) for g in terms.grantee_subject_ids
                ):
                    contract.status = ConsentStatus.EXPIRED
                return ConsentAnswer(satisfied=True, consent_id=terms.consent_id)
            return ConsentAnswer(satisfied=False, reason=failure or "no matching active consent")

    @staticmethod
    def _condition_failure(
        contract: ConsentContract, subject_id: str, environment: EnvironmentContext
    ) -> Optional[str]:
        for condition in contract.terms.conditions:
            if not condition_holds(condition, environment):
                return f"{type(condition).__name__} not satisfied"
        return None

    def revoke_consent(self, patient_id: str, consent_id: str) -> ConsentStatus:
        with self._lock:
            address = self._address_by_consent.get(consent_id)
            if address is None:
                raise UnknownConsent(f"unknown consent: {consent_id}")
            contract = self._contracts[address]
            if contract.owner_patient_id != patient_id:
                raise NotOwner(f"{patient_id} does not own consent {consent_id}")
            contract.status = ConsentStatus.REVOKED
        self._activity("consent_revoked", {"consent_id": consent_id, "patient_id": patient_id})
        return ConsentStatus.REVOKED

    # -- treatment teams --------------------------------------------------

    def create_treatment_team(
        self,
        patient_id: str,
        pools: Mapping[Role, Sequence[str]],
        seed: int = 0,
    ) -> TreatmentTeam:
        contact = self._emergency_contacts.get(patient_id)
        if contact is None:
            raise IncompleteTeam(f"incomplete PTT: {patient_id} has no registered emergency contact")

        rng = random.Random(f"ptt|{seed}|{patient_id}")
        members: dict[Role, str] = {}
        for role in TEAM_ROLES:
            if role is Role.EMC:
                members[role] = contact
                continue
            pool = sorted(pools.get(role, ()))
            if not pool:
                raise IncompleteTeam(f"incomplete PTT: no candidates for role {role.value}")
            members[role] = rng.choice(pool)

        chosen = list(members.values())
        if len(set(chosen)) != len(chosen):
            raise TeamConflict("contains conflicts: one subject holds two team roles")

        with self._lock:
            if patient_id in self._team_by_patient:
                raise TeamConflict(f"contains conflicts: {patient_id} already has an active team")
            serial = len(self._teams) + 1
            ptt_id = f"PTT-{patient_id}-{serial}"
            member_tuple = tuple(sorted(members.items(), key=lambda kv: kv[0].value))
            team = TreatmentTeam(
                ptt_id=ptt_id,
                patient_id=patient_id,
                members=member_tuple,
                ptt_digest=team_digest(ptt_id, patient_id, member_tuple),
            )
            self._teams[ptt_id] = team
            self._team_by_patient[patient_id] = ptt_id
            self.links_for(patient_id).ptt_ids.append(ptt_id)
        self._anchors.relay_anchor(f"ptt:{ptt_id}", team.ptt_digest, anchored_at=self._clock())
        self._activity("team_created", {"ptt_id": ptt_id, "patient_id": patient_id})
        return team

    def get_team(self, ptt_id: str) -> TreatmentTeam:
        try:
            return self._teams[ptt_id]
        except KeyError:
            raise UnknownPpa(f"unknown PTT: {ptt_id}") from None

    def team_for_patient(self, patient_id: str) -> Optional[TreatmentTeam]:
        ptt_id = self._team_by_patient.get(patient_id)
        return self._teams[ptt_id] if ptt_id else None

    def team_memberships(self) -> dict[str, dict[Role, str]]:
        """patient_id -> role -> member subject id, for snapshot consumers."""
        return {
            team.patient_id: team.member_map()
            for team in (self._teams[i] for i in sorted(self._teams))
        }

    def overwrite_team(self, team: TreatmentTeam) -> None:
        """Replace a stored team without re-anchoring (tamper simulation)."""
        if team.ptt_id not in self._teams:
            raise UnknownPpa(f"unknown PTT: {team.ptt_id}")
        self._teams[team.ptt_id] = team
