"""Blind hash-comparison verifier for audit trails and anchored artifacts.

A requester hands over copies of their own trail entries; the verifier
recomputes the containing block's hash, compares it with the anchored
digest on the public registry, and checks the claimed entry is
byte-identical to the in-block transaction. The response carries only
statuses for the requester's own claims.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional, Sequence

from .anchors import AnchorRegistry, UnknownKey
from .auditchain import AuditChain, AuditTransaction, compute_block_hash, compute_tx_root
from .consent import ConsentManager, IntegrityStatus, ppa_component_digests, ppa_digest_from_components, team_digest
from .domain import ConsentLedgerError, OperationKind


class NotOwnTrail(ConsentLedgerError):
    pass


class UnknownBlock(ConsentLedgerError):
    pass


class ClaimStatus(str, Enum):
    NOT_MODIFIED = "NOT_MODIFIED"
    MODIFIED = "MODIFIED"


@dataclass(frozen=True)
class TrailClaim:
    """A user's own copy of one recorded access, locating its block."""

    block_height: int
    tx_id: str
    subject_id: str
    operation: OperationKind
    object_id: str
    conditions_snapshot: str
    timestamp: int

    def element_bytes(self) -> bytes:
        return AuditTransaction.elements_to_bytes(
            self.subject_id, self.operation, self.object_id, self.conditions_snapshot, self.timestamp
        )

    @classmethod
    def from_transaction(cls, tx: AuditTransaction, block_height: int) -> "TrailClaim":
        return cls(
            block_height=block_height,
            tx_id=tx.tx_id,
            subject_id=tx.subject_id,
            operation=tx.operation,
            object_id=tx.object_id,
            conditions_snapshot=tx.conditions_snapshot,
            timestamp=tx.timestamp,
        )

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "block_height": self.block_height,
            "tx_id": self.tx_id,
            "subject_id": self.subject_id,
            "operation": self.operation.value,
            "object_id": self.object_id,
            "conditions_snapshot": self.conditions_snapshot,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "TrailClaim":
        return cls(
            block_height=int(data["block_height"]),
            tx_id=data["tx_id"],
            subject_id=data["subject_id"],
            operation=OperationKind(data["operation"]),
            object_id=data["object_id"],
            conditions_snapshot=data["conditions_snapshot"],
            timestamp=int(data["timestamp"]),
        )


@dataclass(frozen=True)
class ClaimResult:
    claim: TrailClaim
    status: ClaimStatus


@dataclass(frozen=True)
class TrailVerificationReport:
    requester_id: str
    results: tuple[ClaimResult, ...]

    @property
    def overall(self) -> ClaimStatus:
        if any(r.status is ClaimStatus.MODIFIED for r in self.results):
            return ClaimStatus.MODIFIED
        return ClaimStatus.NOT_MODIFIED

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "requester_id": self.requester_id,
            "overall": self.overall.value,
            "results": [
                {"block_height": r.claim.block_height, "tx_id": r.claim.tx_id, "status": r.status.value}
                for r in self.results
            ],
        }


class IntegrityVerifier:
    """Stateless given read snapshots of the chain and the anchor registry."""

    def __init__(
        self,
        chain: AuditChain,
        anchors: AnchorRegistry,
        consents: Optional[ConsentManager] = None,
    ) -> None:
        self._chain = chain
        self._anchors = anchors
        self._consents = consents

    def verify_trails(self, requester_id: str, claims: Sequence[TrailClaim]) -> TrailVerificationReport:
        results = []
        for claim in claims:
            if claim.subject_id != requester_id:
                raise NotOwnTrail(
                    f"{requester_id} may not verify trails recorded for {claim.subject_id}"
                )
            results.append(ClaimResult(claim=claim, status=self._check_claim(claim)))
        return TrailVerificationReport(requester_id=requester_id, results=tuple(results))

    def _check_claim(self, claim: TrailClaim) -> ClaimStatus:
        if not 0 <= claim.block_height < self._chain.height:
            raise UnknownBlock(f"no block at height {claim.block_height}")
        block = self._chain.block_at(claim.block_height)

        try:
            anchored = self._anchors.lookup(f"audit:{claim.block_height}")
        except UnknownKey:
            return ClaimStatus.MODIFIED

        recomputed_root = compute_tx_root(block.transactions)
        recomputed = compute_block_hash(
            block.block_id,
            block.prev_hash,
            block.timestamp,
            block.sealer_id,
            recomputed_root,
        )
        if recomputed != anchored or block.block_hash != anchored or block.tx_root != recomputed_root:
            return ClaimStatus.MODIFIED

        stored = next((tx for tx in block.transactions if tx.tx_id == claim.tx_id), None)
        if stored is None or stored.element_bytes() != claim.element_bytes():
            return ClaimStatus.MODIFIED
        return ClaimStatus.NOT_MODIFIED

    # -- anchored artifact checks ------------------------------------------

    def verify_ppa_anchor(self, ppa_id: str) -> IntegrityStatus:
        if self._consents is None:
            raise ConsentLedgerError("verifier has no consent repository attached")
        anchored = self._anchors.lookup(f"ppa:{ppa_id}")
        try:
            ppa = self._consents.get_ppa(ppa_id)
        except ConsentLedgerError:
            return IntegrityStatus.TAMPERED
        recomputed = ppa_digest_from_components(
            ppa_component_digests(ppa.pc, ppa.prc, ppa.roc, ppa.icc)
        )
        return IntegrityStatus.INTACT if recomputed == anchored else IntegrityStatus.TAMPERED

    def verify_ptt_anchor(self, ptt_id: str) -> IntegrityStatus:
        if self._consents is None:
            raise ConsentLedgerError("verifier has no consent repository attached")
        anchored = self._anchors.lookup(f"ptt:{ptt_id}")
        try:
            team = self._consents.get_team(ptt_id)
        except ConsentLedgerError:
            return IntegrityStatus.TAMPERED
        recomputed = team_digest(team.ptt_id, team.patient_id, team.members)
        return IntegrityStatus.INTACT if recomputed == anchored else IntegrityStatus.TAMPERED


def claims_from_json(text: str) -> tuple[TrailClaim, ...]:
    claims = []
    for line in text.splitlines():
        if line.strip():
            claims.append(TrailClaim.from_json_dict(json.loads(line)))
    return tuple(claims)
