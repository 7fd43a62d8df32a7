"""Append-only, hash-linked transaction log.

Blocks keep their transactions in encoded form so any bit flip in stored
data changes the recomputed digest.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Iterable, Iterator, Optional, TextIO, Union

from . import codec
from .identity import EntityId, PermType, Permission, Token

DIGEST = "sha256"
ZERO_HASH = bytes(32)


@codec.enum_type(3)
class PolicyModel(str, Enum):
    DAC = "DAC"
    RBAC = "RBAC"
    ABAC = "ABAC"
    RDBAC = "RDBAC"


@codec.record(20)
@dataclass(frozen=True)
class DomainRegistration:
    uid_domain: EntityId
    uid_owner: EntityId
    pd: PolicyModel


@codec.record(21)
@dataclass(frozen=True)
class DeviceRegistration:
    uid_domain: EntityId
    did: EntityId
    uid_owner: EntityId
    services: tuple[str, ...] = ()
    # position in the device hierarchy; None attaches to the hub root
    parent: Optional[EntityId] = None


@codec.record(22)
@dataclass(frozen=True)
class DeviceRevocation:
    did: EntityId


@codec.record(23)
@dataclass(frozen=True)
class PermissionGranted:
    per: Permission


@codec.record(24)
@dataclass(frozen=True)
class PermissionRevoked:
    per: Permission


@codec.record(25)
@dataclass(frozen=True)
class NewRole:
    domain: EntityId
    rid: EntityId
    rn: bytes = b""


@codec.record(26)
@dataclass(frozen=True)
class DeleteRole:
    rid: EntityId


@codec.record(27)
@dataclass(frozen=True)
class AssignRoleUser:
    rid: EntityId
    uid: EntityId


@codec.record(28)
@dataclass(frozen=True)
class RemoveRoleUser:
    rid: EntityId
    uid: EntityId


@codec.record(29)
@dataclass(frozen=True)
class AssignRolePermission:
    rid: EntityId
    did: EntityId
    pt: PermType
    sv: Optional[str] = None


@codec.record(30)
@dataclass(frozen=True)
class RevokeRolePermission:
    rid: EntityId
    did: EntityId
    pt: PermType
    sv: Optional[str] = None


@codec.record(31)
@dataclass(frozen=True)
class NewAttribute:
    domain: EntityId
    aid: EntityId
    aname: bytes = b""


@codec.record(32)
@dataclass(frozen=True)
class DeleteAttribute:
    aid: EntityId


@codec.record(33)
@dataclass(frozen=True)
class AssignAttributeDevice:
    aid: EntityId
    did: EntityId
    sv: Optional[str] = None


@codec.record(34)
@dataclass(frozen=True)
class RemoveAttributeDevice:
    aid: EntityId
    did: EntityId
    sv: Optional[str] = None


@codec.record(35)
@dataclass(frozen=True)
class AssignAttributeUser:
    aid: EntityId
    uid: EntityId


@codec.record(36)
@dataclass(frozen=True)
class RemoveAttributeUser:
    aid: EntityId
    uid: EntityId


@codec.record(37)
@dataclass(frozen=True)
class AssignAttributePermission:
    aid_user: EntityId
    aid_device: EntityId
    pt: PermType


@codec.record(38)
@dataclass(frozen=True)
class RevokeAttributePermission:
    aid_user: EntityId
    aid_device: EntityId
    pt: PermType


@codec.record(39)
@dataclass(frozen=True)
class EndorsedToken:
    token: Token


@codec.record(40)
@dataclass(frozen=True)
class TrustUser:
    domain: EntityId
    uid: EntityId


@codec.record(41)
@dataclass(frozen=True)
class DistrustUser:
    domain: EntityId
    uid: EntityId


Body = Union[
    DomainRegistration, DeviceRegistration, DeviceRevocation,
    PermissionGranted, PermissionRevoked,
    NewRole, DeleteRole, AssignRoleUser, RemoveRoleUser,
    AssignRolePermission, RevokeRolePermission,
    NewAttribute, DeleteAttribute, AssignAttributeDevice, RemoveAttributeDevice,
    AssignAttributeUser, RemoveAttributeUser,
    AssignAttributePermission, RevokeAttributePermission,
    EndorsedToken, TrustUser, DistrustUser,
]


@codec.record(50)
@dataclass(frozen=True)
class Transaction:
    issuer: EntityId
    body: Body


def encode_tx(tx: Transaction) -> bytes:
    return codec.encode(tx)


@lru_cache(maxsize=65536)
def decode_tx(raw: bytes) -> Transaction:
    tx = codec.decode(raw)
    if not isinstance(tx, Transaction):
        raise codec.CodecError("not a transaction record")
    return tx


def block_digest(height: int, prev_hash: bytes, raw_txs: Iterable[bytes]) -> bytes:
    h = hashlib.new(DIGEST)
    h.update(b"PBAC-BLOCK")
    h.update(struct.pack(">Q", height))
    h.update(prev_hash)
    raw_txs = tuple(raw_txs)
    h.update(struct.pack(">I", len(raw_txs)))
    for raw in raw_txs:
        h.update(struct.pack(">I", len(raw)))
        h.update(raw)
    return h.digest()


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    raw_txs: tuple[bytes, ...]
    hash: bytes

    @property
    def txs(self) -> tuple[Transaction, ...]:
        return tuple(decode_tx(raw) for raw in self.raw_txs)


class EmptyDomainError(KeyError):
    """Replay requested for a domain with no registration on the ledger."""


@dataclass
class Ledger:
    blocks: list[Block] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def head_hash(self) -> bytes:
        return self.blocks[-1].hash if self.blocks else ZERO_HASH

    def transactions(self) -> Iterator[Transaction]:
        for block in self.blocks:
            yield from block.txs


def append_block(ledger: Ledger, txs: list[Transaction]) -> Block:
    if not txs:
        raise ValueError("a block needs at least one transaction")
    raw = tuple(encode_tx(tx) for tx in txs)
    height = len(ledger.blocks)
    block = Block(height, ledger.head_hash, raw, block_digest(height, ledger.head_hash, raw))
    ledger.blocks.append(block)
    return block


def verify_chain(ledger: Ledger) -> bool:
    prev = ZERO_HASH
    for height, block in enumerate(ledger.blocks):
        if block.height != height or block.prev_hash != prev:
            return False
        if block_digest(block.height, block.prev_hash, block.raw_txs) != block.hash:
            return False
        prev = block.hash
    return True


class DomainIndex:
    """Incremental map from entities (devices, roles, attributes) to domains."""

    def __init__(self) -> None:
        self.domains: dict[EntityId, PolicyModel] = {}
        self.owner_of: dict[EntityId, EntityId] = {}
        self._entity: dict[EntityId, EntityId] = {}

    def domain_of(self, tx: Transaction) -> Optional[EntityId]:
        """Domain the transaction affects; registers new entities on the way."""
        b = tx.body
        if isinstance(b, DomainRegistration):
            if b.uid_domain not in self.domains:
                self.domains[b.uid_domain] = b.pd
                self.owner_of[b.uid_domain] = b.uid_owner
            return b.uid_domain
        if isinstance(b, DeviceRegistration):
            self._entity[b.did] = b.uid_domain
            return b.uid_domain
        if isinstance(b, NewRole):
            self._entity.setdefault(b.rid, b.domain)
            return b.domain
        if isinstance(b, NewAttribute):
            self._entity.setdefault(b.aid, b.domain)
            return b.domain
        if isinstance(b, (TrustUser, DistrustUser)):
            return b.domain
        if isinstance(b, (PermissionGranted, PermissionRevoked)):
            return self._entity.get(b.per.did)
        if isinstance(b, EndorsedToken):
            return self._entity.get(b.token.per.did)
        if isinstance(b, DeviceRevocation):
            return self._entity.get(b.did)
        if isinstance(b, (DeleteRole, AssignRoleUser, RemoveRoleUser, AssignRolePermission, RevokeRolePermission)):
            return self._entity.get(b.rid)
        if isinstance(b, (DeleteAttribute, AssignAttributeDevice, RemoveAttributeDevice,
                          AssignAttributeUser, RemoveAttributeUser)):
            return self._entity.get(b.aid)
        if isinstance(b, (AssignAttributePermission, RevokeAttributePermission)):
            return self._entity.get(b.aid_user)
        return None


def replay(ledger: Ledger, domain: EntityId) -> list[Transaction]:
    index = DomainIndex()
    out: list[Transaction] = []
    for tx in ledger.transactions():
        if index.domain_of(tx) == domain:
            out.append(tx)
    if domain not in index.domains:
        raise EmptyDomainError(str(domain))
    return out


# Dump format: a header line, then one "B <height> <prev> <hash>" line per
# block followed by one "T <hex>" line per encoded transaction.

HEADER = f"# pbac-ledger v1 digest={DIGEST}"


def dump(ledger: Ledger, fp: TextIO) -> None:
    fp.write(HEADER + "\n")
    for block in ledger.blocks:
        fp.write(f"B {block.height} {block.prev_hash.hex()} {block.hash.hex()}\n")
        for raw in block.raw_txs:
            fp.write(f"T {raw.hex()}\n")


def load(fp: TextIO) -> Ledger:
    """Parse a dump; the result is not verified (call ``verify_chain``)."""
    lines = [line.rstrip("\n") for line in fp if line.strip()]
    if not lines or lines[0] != HEADER:
        raise ValueError("not a pbac ledger dump")
    ledger = Ledger()
    current: Optional[tuple[int, bytes, bytes]] = None
    raws: list[bytes] = []

    def flush() -> None:
        if current is not None:
            ledger.blocks.append(Block(current[0], current[1], tuple(raws), current[2]))

    for line in lines[1:]:
        kind, _, rest = line.partition(" ")
        if kind == "B":
            flush()
            height, prev, digest = rest.split()
            current = (int(height), bytes.fromhex(prev), bytes.fromhex(digest))
            raws = []
        elif kind == "T" and current is not None:
            raws.append(bytes.fromhex(rest))
        else:
            raise ValueError(f"bad ledger line: {line[:40]!r}")
    flush()
    return ledger
