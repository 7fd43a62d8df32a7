"""Identities, Ed25519 key pairs, permissions, tokens and session keys."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Mapping, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from . import codec


@codec.enum_type(1)
class Kind(str, Enum):
    USER = "user"
    DEVICE = "device"
    HUB = "hub"
    VALIDATOR = "validator"
    DOMAIN = "domain"
    ROLE = "role"
    ATTRIBUTE = "attribute"


@codec.enum_type(2)
class PermType(str, Enum):
    READ = "read"
    WRITE = "write"
    CONTROL = "control"
    ADMIN = "admin"


@codec.record(1, memo=True)
@dataclass(frozen=True, order=True)
class EntityId:
    kind: Kind
    id: bytes

    def __post_init__(self) -> None:
        if len(self.id) != 16:
            raise ValueError("entity id must be 16 bytes")

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.id.hex()[:12]}"


class IdFactory:
    """Reproducible id source: ``sha256(seed || kind || counter)``."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._counter = 0

    def new(self, kind: Kind) -> EntityId:
        self._counter += 1
        digest = hashlib.sha256(
            struct.pack(">Q", self.seed & (2**64 - 1))
            + kind.value.encode()
            + struct.pack(">Q", self._counter)
        ).digest()
        return EntityId(kind, digest[:16])


@dataclass(frozen=True)
class KeyPair:
    public: bytes
    secret: bytes
    _key: Ed25519PrivateKey = field(repr=False, compare=False)


def keygen(seed: bytes) -> KeyPair:
    if len(seed) != 32:
        raise ValueError("seed must be 32 bytes")
    key = Ed25519PrivateKey.from_private_bytes(seed)
    public = key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return KeyPair(public, bytes(seed), key)


def keygen_for(entity: EntityId, run_seed: int = 0) -> KeyPair:
    """Derive an actor key pair from its id so runs stay reproducible."""
    return keygen(hashlib.sha256(b"pbac-key" + struct.pack(">Q", run_seed) + codec.encode(entity)).digest())


def sign(kp: KeyPair, msg: bytes) -> bytes:
    # Ed25519 signing is deterministic (RFC 8032)
    return kp._key.sign(msg)


_pubkey_cache: dict[bytes, Ed25519PublicKey] = {}


@lru_cache(maxsize=1 << 16)
def verify(public: bytes, msg: bytes, signature: bytes) -> bool:
    # pure in its arguments, so simulated actors re-checking the same
    # signature share one real verification
    key = _pubkey_cache.get(public)
    if key is None:
        key = _pubkey_cache[public] = Ed25519PublicKey.from_public_bytes(public)
    try:
        key.verify(signature, msg)
    except InvalidSignature:
        return False
    return True


@codec.record(2)
@dataclass(frozen=True)
class Permission:
    """``subject`` is a user, role or attribute id depending on the policy model."""

    subject: EntityId
    did: EntityId
    pt: PermType
    sv: Optional[str] = None
    et: Optional[int] = None
    ul: Optional[int] = None

    def __post_init__(self) -> None:
        if self.ul is not None and self.ul < 1:
            raise ValueError("usage limit must be >= 1")

    @property
    def request(self) -> tuple:
        return (self.subject, self.did, self.pt, self.sv)


def canonical_encode(per: Permission) -> bytes:
    return codec.encode(per)


@codec.record(3)
@dataclass(frozen=True)
class Token:
    per: Permission
    signatures: tuple[tuple[EntityId, bytes], ...] = ()

    @property
    def signers(self) -> tuple[EntityId, ...]:
        return tuple(s for s, _ in self.signatures)

    def with_signature(self, signer: EntityId, sig: bytes) -> "Token":
        return Token(self.per, self.signatures + ((signer, sig),))


def sign_token(per: Permission, signer: EntityId, kp: KeyPair) -> Token:
    return Token(per, ((signer, sign(kp, canonical_encode(per))),))


def verify_token(token: Token, directory: Mapping[EntityId, bytes]) -> bool:
    """True iff every listed signer is known and its signature verifies."""
    if not token.signatures:
        return False
    msg = canonical_encode(token.per)
    for signer, sig in token.signatures:
        public = directory.get(signer)
        if public is None or not verify(public, msg, sig):
            return False
    return True


@codec.record(4)
@dataclass(frozen=True)
class SessionKey:
    per: Permission
    key_id: bytes
