"""Canonical byte serialization, digests, and the simulated signature scheme.

Every digest and signature in the system is computed over bytes produced
here, so the encoding must be deterministic across platforms and injective
over distinct values: struct fields are visited in lexicographic order,
strings carry 4-byte big-endian length prefixes, integers are fixed-width
big-endian, and union members carry a 1-byte kind tag.
"""
from __future__ import annotations

import dataclasses
import hashlib
import hmac
from dataclasses import dataclass
from datetime import date
from enum import Enum
from typing import Any

DIGEST_SIZE = 32

# Value kind tags. One byte each; unions (conditions) add their own tag on top.
_TAG_NONE = b"\x00"
_TAG_FALSE = b"\x01"
_TAG_TRUE = b"\x02"
_TAG_INT = b"\x03"
_TAG_STR = b"\x04"
_TAG_BYTES = b"\x05"
_TAG_DATE = b"\x06"
_TAG_LIST = b"\x07"
_TAG_SET = b"\x08"
_TAG_MAP = b"\x09"
_TAG_ENUM = b"\x0a"
_TAG_STRUCT = b"\x0b"
_TAG_UNION = b"\x0c"

# Registered union kinds (condition variants). Populated by domain at import.
_UNION_TAGS: dict[type, int] = {}


def register_union_member(cls: type, tag: int) -> None:
    """Assign a 1-byte union tag to a dataclass type (tag must be unique)."""
    if not 0 <= tag <= 255:
        raise ValueError(f"union tag out of range: {tag}")
    for other, existing in _UNION_TAGS.items():
        if existing == tag and other is not cls:
            raise ValueError(f"union tag {tag} already taken by {other.__name__}")
    _UNION_TAGS[cls] = tag


def _len_prefixed(data: bytes) -> bytes:
    return len(data).to_bytes(4, "big") + data


def _encode_str(value: str) -> bytes:
    return _TAG_STR + _len_prefixed(value.encode("utf-8"))


def _encode_int(value: int) -> bytes:
    return _TAG_INT + value.to_bytes(8, "big", signed=True)


def _encode_struct(value: Any, exclude: frozenset[str]) -> bytes:
    names = sorted(f.name for f in dataclasses.fields(value) if f.name not in exclude)
    out = [_len_prefixed(type(value).__name__.encode("utf-8"))]
    out.append(len(names).to_bytes(4, "big"))
    for name in names:
        out.append(_len_prefixed(name.encode("utf-8")))
        out.append(encode_value(getattr(value, name)))
    body = b"".join(out)
    tag = _UNION_TAGS.get(type(value))
    if tag is not None:
        return _TAG_UNION + bytes([tag]) + body
    return _TAG_STRUCT + body


def encode_value(value: Any) -> bytes:
    """Encode one value; raises TypeError on anything outside the domain set."""
    if value is None:
        return _TAG_NONE
    if value is True:
        return _TAG_TRUE
    if value is False:
        return _TAG_FALSE
    if isinstance(value, Enum):
        return (
            _TAG_ENUM
            + _len_prefixed(type(value).__name__.encode("utf-8"))
            + _len_prefixed(value.name.encode("utf-8"))
        )
    if isinstance(value, int):
        return _encode_int(value)
    if isinstance(value, str):
        return _encode_str(value)
    if isinstance(value, (bytes, bytearray)):
        return _TAG_BYTES + _len_prefixed(bytes(value))
    if isinstance(value, date):
        return _TAG_DATE + _len_prefixed(value.isoformat().encode("utf-8"))
    if isinstance(value, (list, tuple)):
        parts = [encode_value(v) for v in value]
        return _TAG_LIST + len(parts).to_bytes(4, "big") + b"".join(parts)
    if isinstance(value, (set, frozenset)):
        parts = sorted(encode_value(v) for v in value)
        return _TAG_SET + len(parts).to_bytes(4, "big") + b"".join(parts)
    if isinstance(value, dict):
        items = sorted((encode_value(k), encode_value(v)) for k, v in value.items())
        out = [_TAG_MAP, len(items).to_bytes(4, "big")]
        for k, v in items:
            out.append(k)
            out.append(v)
        return b"".join(out)
    if dataclasses.is_dataclass(value):
        return _encode_struct(value, frozenset())
    raise TypeError(f"no canonical encoding for {type(value).__name__}")


def canonical_serialize(value: Any, *, exclude_fields: frozenset[str] = frozenset()) -> bytes:
    """Deterministic bytes for a domain value.

    ``exclude_fields`` drops top-level struct fields (used to serialize a
    request without its own signature). It applies to the top level only.
    """
    if exclude_fields and dataclasses.is_dataclass(value):
        return _encode_struct(value, exclude_fields)
    return encode_value(value)


def digest(data: bytes) -> bytes:
    """SHA-256 of the input."""
    return hashlib.sha256(data).digest()


def hexdigest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class KeyPair:
    private_key: bytes
    public_key: bytes


def _signing_key_for(public_key: bytes) -> bytes:
    return digest(b"consentledger/signing-key:" + public_key)


def derive_keypair(label: str) -> KeyPair:
    """Deterministic key pair for a fixture identity.

    Simulated scheme: the signing key is derived from the public key, so
    verification can recompute the keyed digest. Binding, not secrecy, is
    the contract.
    """
    public_key = digest(b"consentledger/public-key:" + label.encode("utf-8"))
    return KeyPair(private_key=_signing_key_for(public_key), public_key=public_key)


def sign(private_key: bytes, message: bytes) -> bytes:
    """Keyed digest: signature = digest(private_key || message)."""
    return digest(private_key + message)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """True iff ``signature`` was produced by the matching private key over ``message``."""
    expected = sign(_signing_key_for(public_key), message)
    return hmac.compare_digest(expected, signature)
