"""Proof-of-Compliance consensus over a deterministic simulated message bus.

Four phases: (1) order nodes verify submitter signatures and order the
batch, (2) the validator re-checks structure and referenced consents,
(3) k independent auditor nodes replay the recorded access against the
policy and attribute snapshots at the transaction's timestamp and vote,
(4) the committer confirms the five elements are untouched, sets the
final status by strict-majority vote, and appends blocks to the chain.

Auditors see five transaction elements plus snapshots; nothing in this
module can reach a record payload.
"""
from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Optional, Sequence

from .auditchain import AuditBlock, AuditChain, AuditTransaction
from .canonical import verify
from .domain import ComplianceStatus, ConsentLedgerError
from .policy import DecisionSnapshot, evaluate_recorded_access, parse_conditions_snapshot


class ConfigError(ConsentLedgerError):
    pass


class ElementsMutated(ConsentLedgerError):
    pass


HONEST = "honest"
BYZANTINE = "byzantine"
CRASH = "crash"

# Simulated bus timings, in integer milliseconds.
_MAX_HOP_LATENCY_MS = 20
_AUDIT_TIMEOUT_MS = 60_000


@dataclass
class ComplianceVerdict:
    tx_id: str
    votes: dict[str, ComplianceStatus] = field(default_factory=dict)
    final: ComplianceStatus = ComplianceStatus.NOT_DETERMINED


def majority_status(votes: Mapping[str, ComplianceStatus], auditor_count: int) -> ComplianceStatus:
    """Strict majority of the configured auditor count per status; anything
    short of a majority (splits, heavy abstention) is NOT_DETERMINED."""
    compliant = sum(1 for v in votes.values() if v is ComplianceStatus.COMPLIANT)
    noncompliant = sum(1 for v in votes.values() if v is ComplianceStatus.NONCOMPLIANT)
    if compliant * 2 > auditor_count:
        return ComplianceStatus.COMPLIANT
    if noncompliant * 2 > auditor_count:
        return ComplianceStatus.NONCOMPLIANT
    return ComplianceStatus.NOT_DETERMINED


@dataclass(frozen=True)
class NetworkConfig:
    auditor_count: int = 5
    seed: int = 0
    ordering: str = "fifo"  # fifo | priority | size
    fault_plan: Mapping[str, str] = field(default_factory=dict)  # auditor id -> byzantine|crash

    def __post_init__(self) -> None:
        if self.auditor_count < 1:
            raise ConfigError("at least one auditor node is required")
        if self.ordering not in ("fifo", "priority", "size"):
            raise ConfigError(f"unknown ordering policy: {self.ordering}")
        for node_id, fault in self.fault_plan.items():
            if fault not in (BYZANTINE, CRASH):
                raise ConfigError(f"unknown fault {fault!r} for {node_id}")


SnapshotProvider = Callable[[int], DecisionSnapshot]
KeyResolver = Callable[[str], Optional[bytes]]


# --- Phase functions ---------------------------------------------------------


def phase1_order(
    transactions: Sequence[AuditTransaction],
    key_resolver: KeyResolver,
    ordering: str = "fifo",
) -> tuple[list[AuditTransaction], list[tuple[AuditTransaction, str]]]:
    valid: list[AuditTransaction] = []
    invalid: list[tuple[AuditTransaction, str]] = []
    for tx in transactions:
        public_key = key_resolver(tx.subject_id)
        if public_key is None:
            invalid.append((tx, f"unknown submitter {tx.subject_id}"))
            continue
        if not verify(public_key, tx.element_bytes(), tx.submitter_signature):
            invalid.append((tx, "submitter signature does not verify"))
            continue
        valid.append(tx)
    if ordering == "priority":
        valid.sort(key=lambda tx: tx.timestamp)
    elif ordering == "size":
        valid.sort(key=lambda tx: len(tx.element_bytes()))
    return valid, invalid


def phase2_validate(
    transactions: Sequence[AuditTransaction],
    snapshot_provider: SnapshotProvider,
) -> tuple[list[AuditTransaction], list[tuple[AuditTransaction, str]]]:
    accepted: list[AuditTransaction] = []
    rejected: list[tuple[AuditTransaction, str]] = []
    for tx in transactions:
        reason = _structural_failure(tx, snapshot_provider(tx.timestamp))
        if reason is None:
            accepted.append(tx)
        else:
            rejected.append((tx, reason))
    return accepted, rejected


def _structural_failure(tx: AuditTransaction, snapshot: DecisionSnapshot) -> Optional[str]:
    if not tx.subject_id or not tx.object_id:
        return "incomplete transaction elements"
    if tx.timestamp < 0:
        return "negative timestamp"
    try:
        _, consent_ids = parse_conditions_snapshot(tx.conditions_snapshot)
    except (ValueError, KeyError, TypeError, json.JSONDecodeError):
        return "malformed conditions snapshot"
    if tx.subject_id not in snapshot.subjects:
        return f"unknown subject {tx.subject_id}"
    if tx.object_id not in snapshot.records:
        return f"unknown object {tx.object_id}"
    for consent_id in consent_ids:
        if consent_id not in snapshot.consent_facts:
            return f"referenced consent {consent_id} not on ledger"
    return None


@dataclass
class AuditorNode:
    node_id: str
    snapshot_provider: SnapshotProvider
    behavior: str = HONEST

    def vote(self, tx: AuditTransaction) -> Optional[ComplianceStatus]:
        if self.behavior == CRASH:
            return None
        compliant, _ = evaluate_recorded_access(
            self.snapshot_provider(tx.timestamp),
            tx.subject_id,
            tx.operation,
            tx.object_id,
            tx.conditions_snapshot,
            tx.timestamp,
        )
        if self.behavior == BYZANTINE:
            compliant = not compliant
        return ComplianceStatus.COMPLIANT if compliant else ComplianceStatus.NONCOMPLIANT


def phase3_audit(
    transactions: Sequence[AuditTransaction],
    auditors: Sequence[AuditorNode],
) -> list[ComplianceVerdict]:
    verdicts = []
    for tx in transactions:
        verdict = ComplianceVerdict(tx_id=tx.tx_id)
        for auditor in auditors:
            vote = auditor.vote(tx)
            if vote is not None:
                verdict.votes[auditor.node_id] = vote
        verdict.final = majority_status(verdict.votes, len(auditors))
        verdicts.append(verdict)
    return verdicts


def phase4_commit(
    transactions: Sequence[AuditTransaction],
    verdicts: Mapping[str, ComplianceVerdict],
    original_elements: Mapping[str, bytes],
    chain: AuditChain,
    commit_time: int,
) -> tuple[tuple[AuditBlock, ...], list[AuditTransaction], list[tuple[AuditTransaction, str]]]:
    committed: list[AuditTransaction] = []
    dropped: list[tuple[AuditTransaction, str]] = []
    for tx in transactions:
        original = original_elements.get(tx.tx_id)
        if original is None or tx.element_bytes() != original:
            dropped.append((tx, "transaction elements mutated between phases"))
            continue
        committed.append(tx.finalized(verdicts[tx.tx_id].final))
    blocks = chain.commit_finalized(committed, commit_time) if committed else ()
    return blocks, committed, dropped


# --- Deterministic message bus -------------------------------------------------


class MessageBus:
    """Discrete-event scheduler: events fire in (time, sequence) order and
    latencies come from the seeded generator, so runs are reproducible."""

    def __init__(self, seed: int) -> None:
        self._queue: list[tuple[int, int, Callable[[], None]]] = []
        self._seq = 0
        self._rng = random.Random(f"poc-bus|{seed}")
        self.now = 0

    def send(self, delay_ms: int, handler: Callable[[], None]) -> None:
        self._seq += 1
        heapq.heappush(self._queue, (self.now + delay_ms, self._seq, handler))

    def hop(self, handler: Callable[[], None]) -> None:
        self.send(self._rng.randint(1, _MAX_HOP_LATENCY_MS), handler)

    def run(self) -> None:
        while self._queue:
            time_ms, _, handler = heapq.heappop(self._queue)
            self.now = time_ms
            handler()


# --- The network ---------------------------------------------------------------


@dataclass
class PocReport:
    verdicts: list[ComplianceVerdict] = field(default_factory=list)
    block_of_tx: dict[str, int] = field(default_factory=dict)
    committed: list[str] = field(default_factory=list)
    invalid: list[tuple[str, str]] = field(default_factory=list)
    rejected: list[tuple[str, str]] = field(default_factory=list)
    mutated: list[tuple[str, str]] = field(default_factory=list)
    submitted: int = 0

    @property
    def dropped(self) -> list[tuple[str, str]]:
        return self.invalid + self.rejected + self.mutated

    def final_statuses(self) -> dict[str, ComplianceStatus]:
        return {v.tx_id: v.final for v in self.verdicts}

    def merge(self, other: "PocReport") -> None:
        self.verdicts.extend(other.verdicts)
        self.block_of_tx.update(other.block_of_tx)
        self.committed.extend(other.committed)
        self.invalid.extend(other.invalid)
        self.rejected.extend(other.rejected)
        self.mutated.extend(other.mutated)
        self.submitted += other.submitted

    def export_jsonl(self) -> str:
        lines = []
        for verdict in self.verdicts:
            lines.append(
                json.dumps(
                    {
                        "tx_id": verdict.tx_id,
                        "votes": {k: v.value for k, v in sorted(verdict.votes.items())},
                        "final": verdict.final.value,
                        "block_id": self.block_of_tx.get(verdict.tx_id),
                    },
                    sort_keys=True,
                    separators=(",", ":"),
                )
            )
        return "\n".join(lines) + ("\n" if lines else "")


class PocNetwork:
    """Client, order, validator, auditor, and committer state machines wired
    over the message bus. State moves only by value-passing messages."""

    def __init__(
        self,
        chain: AuditChain,
        snapshot_provider: SnapshotProvider,
        key_resolver: KeyResolver,
        config: NetworkConfig,
    ) -> None:
        if not chain.config.sealers:
            raise ConfigError("sealer set is empty")
        self._chain = chain
        self._snapshots = snapshot_provider
        self._key_resolver = key_resolver
        self._config = config
        self._auditors = [
            AuditorNode(
                node_id=f"AUD-{i + 1}",
                snapshot_provider=snapshot_provider,
                behavior=config.fault_plan.get(f"AUD-{i + 1}", HONEST),
            )
            for i in range(config.auditor_count)
        ]

    @property
    def auditors(self) -> tuple[AuditorNode, ...]:
        return tuple(self._auditors)

    def run(self, transactions: Sequence[AuditTransaction], commit_time: int) -> PocReport:
        bus = MessageBus(self._config.seed)
        report = PocReport(submitted=len(transactions))
        original_elements = {tx.tx_id: tx.element_bytes() for tx in transactions}
        state: dict[str, Any] = {"ordered": [], "accepted": [], "votes": {}, "voted_txs": []}

        def client_submit() -> None:
            bus.hop(order_phase)

        def order_phase() -> None:
            valid, invalid = phase1_order(transactions, self._key_resolver, self._config.ordering)
            state["ordered"] = valid
            report.invalid.extend((tx.tx_id, reason) for tx, reason in invalid)
            bus.hop(validate_phase)

        def validate_phase() -> None:
            accepted, rejected = phase2_validate(state["ordered"], self._snapshots)
            state["accepted"] = accepted
            report.rejected.extend((tx.tx_id, reason) for tx, reason in rejected)
            for auditor in self._auditors:
                bus.hop(lambda a=auditor: auditor_phase(a))
            bus.send(_AUDIT_TIMEOUT_MS, commit_phase)

        def auditor_phase(auditor: AuditorNode) -> None:
            if auditor.behavior == CRASH:
                return  # no response; the committer's timeout treats this as abstention
            ballots = {tx.tx_id: auditor.vote(tx) for tx in state["accepted"]}
            bus.hop(lambda: collect_votes(auditor.node_id, ballots))

        def collect_votes(auditor_id: str, ballots: Mapping[str, Optional[ComplianceStatus]]) -> None:
            state["votes"][auditor_id] = ballots

        def commit_phase() -> None:
            verdict_map: dict[str, ComplianceVerdict] = {}
            for tx in state["accepted"]:
                verdict = ComplianceVerdict(tx_id=tx.tx_id)
                for auditor_id in sorted(state["votes"]):
                    ballot = state["votes"][auditor_id].get(tx.tx_id)
                    if ballot is not None:
                        verdict.votes[auditor_id] = ballot
                verdict.final = majority_status(verdict.votes, self._config.auditor_count)
                verdict_map[tx.tx_id] = verdict
                report.verdicts.append(verdict)
            blocks, committed, dropped = phase4_commit(
                state["accepted"], verdict_map, original_elements, self._chain, commit_time
            )
            report.mutated.extend((tx.tx_id, reason) for tx, reason in dropped)
            report.committed.extend(tx.tx_id for tx in committed)
            for block in blocks:
                for tx in block.transactions:
                    report.block_of_tx[tx.tx_id] = block.block_id

        bus.hop(client_submit)
        bus.run()
        return report


def run_network(
    chain: AuditChain,
    snapshot_provider: SnapshotProvider,
    key_resolver: KeyResolver,
    config: NetworkConfig,
    commit_time: int = 0,
    transactions: Optional[Sequence[AuditTransaction]] = None,
) -> PocReport:
    """Drain the chain's pending pool (or audit an explicit batch) through
    phases 1-4 and return the verdict report."""
    network = PocNetwork(chain, snapshot_provider, key_resolver, config)
    batch = chain.take_pending() if transactions is None else tuple(transactions)
    return network.run(batch, commit_time)
