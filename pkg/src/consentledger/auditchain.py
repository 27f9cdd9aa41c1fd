"""The private audit blockchain: FIFO pool, round-robin sealing, hash chain.

Blocks batch up to M transactions, link by prev_hash, and anchor their
hash to the public registry at seal time. Transactions carry five
immutable elements (subject, operation, object, conditions, timestamp);
the compliance status is the only field set later, exactly once.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Any, Callable, Iterable, Optional, Sequence

from .anchors import AnchorRegistry
from .canonical import DIGEST_SIZE, canonical_serialize, digest, verify
from .domain import ComplianceStatus, ConsentLedgerError, OperationKind

GENESIS_PREV_HASH = bytes(DIGEST_SIZE)

TERMINAL_STATUSES = frozenset(
    {ComplianceStatus.COMPLIANT, ComplianceStatus.NONCOMPLIANT, ComplianceStatus.NOT_DETERMINED}
)


class BadSignature(ConsentLedgerError):
    pass


class NonPendingStatus(ConsentLedgerError):
    pass


class Unauthorized(ConsentLedgerError):
    pass


class StatusAlreadySet(ConsentLedgerError):
    pass


@dataclass(frozen=True)
class AuditTransaction:
    tx_id: str
    subject_id: str
    operation: OperationKind
    object_id: str
    conditions_snapshot: str
    timestamp: int
    compliance_status: ComplianceStatus = ComplianceStatus.PENDING
    submitter_signature: bytes = b""

    @staticmethod
    def elements_to_bytes(
        subject_id: str,
        operation: OperationKind,
        object_id: str,
        conditions_snapshot: str,
        timestamp: int,
    ) -> bytes:
        return canonical_serialize(
            (subject_id, operation, object_id, conditions_snapshot, timestamp)
        )

    def element_bytes(self) -> bytes:
        """Canonical bytes of the five immutable elements only."""
        return self.elements_to_bytes(
            self.subject_id,
            self.operation,
            self.object_id,
            self.conditions_snapshot,
            self.timestamp,
        )

    def finalized(self, status: ComplianceStatus) -> "AuditTransaction":
        if self.compliance_status is not ComplianceStatus.PENDING:
            raise StatusAlreadySet(f"{self.tx_id} already has status {self.compliance_status.value}")
        if status not in TERMINAL_STATUSES:
            raise NonPendingStatus(f"{status.value} is not a terminal compliance status")
        return replace(self, compliance_status=status)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "tx_id": self.tx_id,
            "subject_id": self.subject_id,
            "operation": self.operation.value,
            "object_id": self.object_id,
            "conditions_snapshot": self.conditions_snapshot,
            "timestamp": self.timestamp,
            "compliance_status": self.compliance_status.value,
            "submitter_signature": self.submitter_signature.hex(),
        }

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "AuditTransaction":
        return cls(
            tx_id=data["tx_id"],
            subject_id=data["subject_id"],
            operation=OperationKind(data["operation"]),
            object_id=data["object_id"],
            conditions_snapshot=data["conditions_snapshot"],
            timestamp=int(data["timestamp"]),
            compliance_status=ComplianceStatus(data["compliance_status"]),
            submitter_signature=bytes.fromhex(data["submitter_signature"]),
        )


def compute_tx_root(transactions: Sequence[AuditTransaction]) -> bytes:
    """Flat digest over the concatenated canonical transaction serializations."""
    return digest(b"".join(canonical_serialize(tx) for tx in transactions))


def compute_block_hash(
    block_id: int, prev_hash: bytes, timestamp: int, sealer_id: str, tx_root: bytes
) -> bytes:
    header = canonical_serialize((block_id, prev_hash, timestamp, sealer_id))
    return digest(header + tx_root)


@dataclass(frozen=True)
class AuditBlock:
    block_id: int
    prev_hash: bytes
    timestamp: int
    sealer_id: str
    transactions: tuple[AuditTransaction, ...]
    tx_root: bytes
    block_hash: bytes

    @classmethod
    def seal(
        cls,
        block_id: int,
        prev_hash: bytes,
        timestamp: int,
        sealer_id: str,
        transactions: Sequence[AuditTransaction],
    ) -> "AuditBlock":
        txs = tuple(transactions)
        if not txs:
            raise ValueError("a block must contain at least one transaction")
        tx_root = compute_tx_root(txs)
        return cls(
            block_id=block_id,
            prev_hash=prev_hash,
            timestamp=timestamp,
            sealer_id=sealer_id,
            transactions=txs,
            tx_root=tx_root,
            block_hash=compute_block_hash(block_id, prev_hash, timestamp, sealer_id, tx_root),
        )

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "block_id": self.block_id,
            "prev_hash": self.prev_hash.hex(),
            "timestamp": self.timestamp,
            "sealer_id": self.sealer_id,
            "transactions": [tx.to_json_dict() for tx in self.transactions],
            "tx_root": self.tx_root.hex(),
            "block_hash": self.block_hash.hex(),
        }

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "AuditBlock":
        return cls(
            block_id=int(data["block_id"]),
            prev_hash=bytes.fromhex(data["prev_hash"]),
            timestamp=int(data["timestamp"]),
            sealer_id=data["sealer_id"],
            transactions=tuple(AuditTransaction.from_json_dict(t) for t in data["transactions"]),
            tx_root=bytes.fromhex(data["tx_root"]),
            block_hash=bytes.fromhex(data["block_hash"]),
        )


@dataclass(frozen=True)
class ChainConfig:
    chain_id: int = 12345
    period: int = 15
    sealers: tuple[str, ...] = ("SEALER-1", "SEALER-2")
    max_tx_per_block: int = 8

    def __post_init__(self) -> None:
        if not self.sealers:
            raise ValueError("sealer set must be non-empty")
        if self.period < 1:
            raise ValueError("block period must be >= 1")
        if self.max_tx_per_block < 1:
            raise ValueError("max transactions per block must be >= 1")

    def to_genesis_dict(self) -> dict[str, Any]:
        return {
            "chainId": self.chain_id,
            "period": self.period,
            "sealers": list(self.sealers),
            "maxTx": self.max_tx_per_block,
        }

    @classmethod
    def from_genesis_dict(cls, data: dict[str, Any]) -> "ChainConfig":
        return cls(
            chain_id=int(data["chainId"]),
            period=int(data["period"]),
            sealers=tuple(data["sealers"]),
            max_tx_per_block=int(data["maxTx"]),
        )


def first_bad_height(blocks: Sequence[AuditBlock]) -> Optional[int]:
    """Walk from genesis recomputing roots, hashes, and links.

    Returns the first inconsistent height, or None when the chain is sound.
    """
    prev: Optional[AuditBlock] = None
    for height, block in enumerate(blocks):
        if block.block_id != height:
            return height
        expected_prev = GENESIS_PREV_HASH if prev is None else prev.block_hash
        if block.prev_hash != expected_prev:
            return height
        recomputed_root = compute_tx_root(block.transactions)
        if recomputed_root != block.tx_root:
            return height
        recomputed_hash = compute_block_hash(
            block.block_id, block.prev_hash, block.timestamp, block.sealer_id, recomputed_root
        )
        if recomputed_hash != block.block_hash:
            return height
        prev = block
    return None


class AuditChain:
    """Pool plus chain. A single sealer task owns both; submitters enqueue
    FIFO and readers get immutable snapshots."""

    def __init__(
        self,
        config: ChainConfig,
        anchor_registry: AnchorRegistry,
        key_resolver: Optional[Callable[[str], Optional[bytes]]] = None,
        readers: Iterable[str] = (),
    ) -> None:
        self.config = config
        self._anchors = anchor_registry
        self._key_resolver = key_resolver
        self._readers = set(readers)
        self._pool: list[AuditTransaction] = []
        self._blocks: list[AuditBlock] = []
        self._last_seal_time: Optional[int] = None
        self._listeners: list[Callable[[AuditBlock], None]] = []
        self.accepted_count = 0

    # -- submission -----------------------------------------------------

    def submit(self, tx: AuditTransaction) -> int:
        if tx.compliance_status is not ComplianceStatus.PENDING:
            raise NonPendingStatus(
                f"transaction {tx.tx_id} submitted with status {tx.compliance_status.value}"
            )
        if self._key_resolver is not None:
            public_key = self._key_resolver(tx.subject_id)
            if public_key is None:
                raise BadSignature(f"unknown submitter: {tx.subject_id}")
            if not verify(public_key, tx.element_bytes(), tx.submitter_signature):
                raise BadSignature(f"signature check failed for {tx.tx_id}")
        position = len(self._pool)
        self._pool.append(tx)
        self.accepted_count += 1
        return position

    @property
    def pending_count(self) -> int:
        return len(self._pool)

    def take_pending(self) -> tuple[AuditTransaction, ...]:
        """Drain the pool for consensus processing (FIFO order preserved)."""
        drained = tuple(self._pool)
        self._pool.clear()
        return drained

    # -- sealing ----------------------------------------------------------

    def _next_sealer(self) -> str:
        return self.config.sealers[len(self._blocks) % len(self.config.sealers)]

    def _append_block(self, transactions: Sequence[AuditTransaction], now: int) -> AuditBlock:
        height = len(self._blocks)
        prev_hash = self._blocks[-1].block_hash if self._blocks else GENESIS_PREV_HASH
        block = AuditBlock.seal(height, prev_hash, now, self._next_sealer(), transactions)
        self._blocks.append(block)
        self._last_seal_time = now
        self._anchors.relay_anchor(f"audit:{height}", block.block_hash, anchored_at=now)
        for listener in self._listeners:
            listener(block)
        return block

    def seal_block(self, now: int) -> Optional[AuditBlock]:
        if not self._pool:
            return None
        if self._last_seal_time is not None and now < self._last_seal_time + self.config.period:
            return None
        batch = self._pool[: self.config.max_tx_per_block]
        del self._pool[: len(batch)]
        return self._append_block(batch, now)

    def commit_finalized(
        self, transactions: Sequence[AuditTransaction], start_time: int
    ) -> tuple[AuditBlock, ...]:
        """Committer path: batch already-verdicted transactions into blocks,
        one block per period starting at ``start_time``."""
        for tx in transactions:
            if tx.compliance_status not in TERMINAL_STATUSES:
                raise NonPendingStatus(f"cannot commit {tx.tx_id} without a terminal status")
        blocks = []
        now = start_time
        if self._last_seal_time is not None:
            now = max(now, self._last_seal_time + self.config.period)
        remaining = list(transactions)
        while remaining:
            batch = remaining[: self.config.max_tx_per_block]
            del remaining[: len(batch)]
            blocks.append(self._append_block(batch, now))
            now += self.config.period
        return tuple(blocks)

    def subscribe(self, listener: Callable[[AuditBlock], None]) -> None:
        self._listeners.append(listener)

    # -- reads -------------------------------------------------------------

    @property
    def blocks(self) -> tuple[AuditBlock, ...]:
        return tuple(self._blocks)

    @property
    def height(self) -> int:
        return len(self._blocks)

    @property
    def head(self) -> Optional[AuditBlock]:
        return self._blocks[-1] if self._blocks else None

    def block_at(self, height: int) -> AuditBlock:
        if not 0 <= height < len(self._blocks):
            raise IndexError(f"no block at height {height}")
        return self._blocks[height]

    def add_reader(self, reader_id: str) -> None:
        self._readers.add(reader_id)

    def get_trails(
        self,
        requester_id: str,
        *,
        subject_id: Optional[str] = None,
        object_id: Optional[str] = None,
        block_range: Optional[tuple[int, int]] = None,
    ) -> tuple[AuditTransaction, ...]:
        if requester_id not in self._readers:
            raise Unauthorized(f"{requester_id} holds no audit-read capability")
        out = []
        for block in self._blocks:
            if block_range is not None and not block_range[0] <= block.block_id <= block_range[1]:
                continue
            for tx in block.transactions:
                if subject_id is not None and tx.subject_id != subject_id:
                    continue
                if object_id is not None and tx.object_id != object_id:
                    continue
                out.append(tx)
        return tuple(out)

    def recompute_and_check(self) -> Optional[int]:
        return first_bad_height(self._blocks)

    def committed_tx_count(self) -> int:
        return sum(len(b.transactions) for b in self._blocks)

    # -- tamper simulation ---------------------------------------------------

    def replace_block(self, height: int, block: AuditBlock) -> None:
        """Overwrite stored block bytes without touching anchors. Simulates
        storage-level tampering; the normal API never rewrites blocks."""
        if not 0 <= height < len(self._blocks):
            raise IndexError(f"no block at height {height}")
        self._blocks[height] = block

    # -- import/export ---------------------------------------------------------

    def export_jsonl(self) -> str:
        lines = [
            json.dumps(block.to_json_dict(), sort_keys=True, separators=(",", ":"))
            for block in self._blocks
        ]
        return "\n".join(lines) + ("\n" if lines else "")


def blocks_from_jsonl(text: str) -> tuple[AuditBlock, ...]:
    blocks = []
    for line in text.splitlines():
        if line.strip():
            blocks.append(AuditBlock.from_json_dict(json.loads(line)))
    return tuple(blocks)
