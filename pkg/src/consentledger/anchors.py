"""Simulated public-chain anchor registry behind a blind relay.

Write-once keyed store for 32-byte digests: audit block hashes, PPA and
PTT digests. The relay stores entries verbatim and answers lookups only;
it never enumerates other writers' keys back to a caller.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from typing import Iterator

from .canonical import DIGEST_SIZE
from .domain import ConsentLedgerError


class AlreadyAnchored(ConsentLedgerError):
    pass


class UnknownKey(ConsentLedgerError):
    pass


@dataclass(frozen=True)
class AnchorEntry:
    key: str
    digest: bytes
    anchored_at: int


@dataclass(frozen=True)
class AnchorReceipt:
    key: str
    anchored_at: int


class AnchorRegistry:
    """Append-only keyed digest store; writes linearizable, reads wait-free."""

    def __init__(self) -> None:
        self._entries: dict[str, AnchorEntry] = {}
        self._lock = threading.Lock()

    def relay_anchor(self, key: str, digest: bytes, anchored_at: int = 0) -> AnchorReceipt:
        if len(digest) != DIGEST_SIZE:
            raise ValueError(f"anchored digest must be {DIGEST_SIZE} bytes")
        with self._lock:
            if key in self._entries:
                raise AlreadyAnchored(f"key already anchored: {key}")
            self._entries[key] = AnchorEntry(key=key, digest=bytes(digest), anchored_at=anchored_at)
        return AnchorReceipt(key=key, anchored_at=anchored_at)

    def lookup(self, key: str) -> bytes:
        try:
            return self._entries[key].digest
        except KeyError:
            raise UnknownKey(f"key never anchored: {key}") from None

    def has(self, key: str) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> Iterator[AnchorEntry]:
        for key in sorted(self._entries):
            yield self._entries[key]

    def export_jsonl(self) -> str:
        lines = [
            json.dumps(
                {"key": e.key, "digest": e.digest.hex(), "anchored_at": e.anchored_at},
                sort_keys=True,
                separators=(",", ":"),
            )
            for e in self.entries()
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def import_jsonl(cls, text: str) -> "AnchorRegistry":
        registry = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            data = json.loads(line)
            registry.relay_anchor(data["key"], bytes.fromhex(data["digest"]), int(data["anchored_at"]))
        return registry
