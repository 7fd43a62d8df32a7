"""Materialized per-domain policy state and the model decision procedures.

A :class:`ShadowDP` is built by applying ledger transactions in order.  Hubs
and validators each own one per domain; :func:`rebuild` replays the ledger
to reconstruct it after a crash.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from . import codec
from .hierarchy import DeviceTree, Grant
from .identity import EntityId, Permission
from .ledger import (
    AssignAttributeDevice, AssignAttributePermission, AssignAttributeUser,
    AssignRolePermission, AssignRoleUser, DeleteAttribute, DeleteRole,
    DeviceRegistration, DeviceRevocation, DistrustUser, DomainRegistration,
    EndorsedToken, Ledger, NewAttribute, NewRole, PermissionGranted,
    PermissionRevoked, PolicyModel, RemoveAttributeDevice, RemoveAttributeUser,
    RemoveRoleUser, RevokeAttributePermission, RevokeRolePermission,
    Transaction, TrustUser, replay,
)

log = logging.getLogger(__name__)

Request = tuple  # (uid, did, pt, sv)
RolePerm = tuple  # (did, pt, sv)

DEFAULT_SWEEP_PERIOD_US = 60_000_000


class PolicyError(Exception):
    """Transaction rejected; the shadowDP is left unchanged."""


class Unauthorized(PolicyError):
    pass


class UnknownReference(PolicyError):
    pass


class DuplicateEntity(PolicyError):
    pass


@dataclass(frozen=True)
class Decision:
    granted: bool
    et: Optional[int] = None
    ul: Optional[int] = None
    reason: str = ""

    @classmethod
    def grant(cls, et: Optional[int] = None, ul: Optional[int] = None) -> "Decision":
        return cls(True, et, ul)

    @classmethod
    def reject(cls, reason: str) -> "Decision":
        return cls(False, reason=reason)

    def __bool__(self) -> bool:
        return self.granted


@dataclass(frozen=True)
class DeviceRecord:
    owner: EntityId
    services: tuple[str, ...]
    parent: Optional[EntityId]


def _add(index: dict, key, value) -> None:
    index.setdefault(key, set()).add(value)


def _discard(index: dict, key, value) -> None:
    values = index.get(key)
    if values is not None:
        values.discard(value)
        if not values:
            del index[key]


class ShadowDP:
    def __init__(self, domain: EntityId):
        self.domain = domain
        self.model: Optional[PolicyModel] = None
        self.owner: Optional[EntityId] = None
        self.admin: Optional[EntityId] = None
        self.devices: dict[EntityId, DeviceRecord] = {}
        self.trusted: set[EntityId] = set()
        # DAC
        self.acl: dict[Request, Permission] = {}
        self.uses: dict[Request, int] = {}  # volatile, not part of serialization
        # RBAC
        self.roles: dict[EntityId, bytes] = {}
        self.retired: set[EntityId] = set()
        self.map_ur: dict[EntityId, set[EntityId]] = {}
        self.map_ru: dict[EntityId, set[EntityId]] = {}
        self.role_perms: dict[EntityId, set[RolePerm]] = {}
        # ABAC
        self.attrs: dict[EntityId, bytes] = {}
        self.attr_users: dict[EntityId, set[EntityId]] = {}
        self.attr_devices: dict[EntityId, set[tuple]] = {}
        self.attr_perms: set[tuple] = set()
        self.user_attrs: dict[EntityId, set[EntityId]] = {}
        self.device_attrs: dict[tuple, set[EntityId]] = {}
        # R&D-BAC; the hub sentinel is the domain id itself
        self.tree: Optional[DeviceTree] = None

    # -- helpers -----------------------------------------------------------

    def is_trusted(self, uid: EntityId) -> bool:
        return uid == self.owner or uid in self.trusted

    def _require_device(self, did: EntityId) -> None:
        if did not in self.devices:
            raise UnknownReference(f"device {did} not registered")

    def _require_role(self, rid: EntityId) -> None:
        if rid not in self.roles:
            raise UnknownReference(f"role {rid} unknown")

    def _require_attr(self, aid: EntityId) -> None:
        if aid not in self.attrs:
            raise UnknownReference(f"attribute {aid} unknown")

    def perms_of(self, rid: EntityId) -> set[RolePerm]:
        return self.role_perms.get(rid, set())

    # -- transactions ------------------------------------------------------

    def apply(self, tx: Transaction) -> list[Permission]:
        """Apply one transaction.

        Returns the permissions that the change takes away from users and that
        must therefore be revoked on devices.  Raises :class:`PolicyError`
        without touching state if the transaction is invalid.
        """
        body = tx.body
        if isinstance(body, DomainRegistration):
            if body.uid_domain != self.domain:
                raise UnknownReference("registration for another domain")
            if self.model is not None:
                raise DuplicateEntity("domain already registered")
            self.model, self.owner, self.admin = body.pd, body.uid_owner, tx.issuer
            if body.pd is PolicyModel.RDBAC:
                self.tree = DeviceTree(root=self.domain)
            return []
        if self.model is None:
            raise UnknownReference("domain not registered")
        if isinstance(body, EndorsedToken):
            # access record only; validity comes from the quorum signatures
            return []
        if tx.issuer not in (self.owner, self.admin):
            raise Unauthorized(f"{tx.issuer} may not administer {self.domain}")
        handler = self._handlers.get(type(body))
        if handler is None:
            raise PolicyError(f"unsupported transaction {type(body).__name__}")
        return handler(self, body)

    def _device_registration(self, b: DeviceRegistration) -> list[Permission]:
        if b.uid_domain != self.domain:
            raise UnknownReference("device registered to another domain")
        if b.did in self.devices:
            raise DuplicateEntity(f"device {b.did} already registered")
        if b.parent is not None and b.parent not in self.devices:
            raise UnknownReference(f"parent {b.parent} not registered")
        if self.tree is not None:
            parent = self.domain if b.parent is None else b.parent
            if b.did in self.tree:
                if self.tree.nodes[b.did].parent != parent:
                    raise PolicyError("re-registration cannot move a device in the hierarchy")
            else:
                self.tree.register_leaf(b.did, parent)
        self.devices[b.did] = DeviceRecord(b.uid_owner, tuple(b.services), b.parent)
        return []

    def _device_revocation(self, b: DeviceRevocation) -> list[Permission]:
        self._require_device(b.did)
        revoked = [p for key, p in self.acl.items() if key[1] == b.did]
        for p in revoked:
            del self.acl[p.request]
            self.uses.pop(p.request, None)
        for rid in sorted(self.role_perms):
            for rp in sorted((rp for rp in self.role_perms[rid] if rp[0] == b.did), key=codec.encode):
                for uid in sorted(self.map_ru.get(rid, ())):
                    revoked.append(Permission(uid, rp[0], rp[1], rp[2]))
                if self.tree is not None:
                    self.tree.revoke(rp[0], Grant(rid, rp[1], rp[2]))
                _discard(self.role_perms, rid, rp)
        for aid in sorted(self.attr_devices):
            for pair in [p for p in self.attr_devices[aid] if p[0] == b.did]:
                _discard(self.attr_devices, aid, pair)
                _discard(self.device_attrs, pair, aid)
        del self.devices[b.did]
        return revoked

    def _permission_granted(self, b: PermissionGranted) -> list[Permission]:
        self._require_device(b.per.did)
        self.acl[b.per.request] = b.per
        self.uses.pop(b.per.request, None)
        return []

    def _permission_revoked(self, b: PermissionRevoked) -> list[Permission]:
        if b.per.request not in self.acl:
            raise UnknownReference("no such ACL entry")
        del self.acl[b.per.request]
        self.uses.pop(b.per.request, None)
        return [b.per]

    def _trust(self, b: TrustUser) -> list[Permission]:
        if b.domain != self.domain:
            raise UnknownReference("trust list of another domain")
        self.trusted.add(b.uid)
        return []

    def _distrust(self, b: DistrustUser) -> list[Permission]:
        if b.domain != self.domain or b.uid not in self.trusted:
            raise UnknownReference("user not in trusted list")
        self.trusted.discard(b.uid)
        return []

    def _new_role(self, b: NewRole) -> list[Permission]:
        if b.domain != self.domain:
            raise UnknownReference("role for another domain")
        if b.rid in self.roles or b.rid in self.retired:
            raise DuplicateEntity(f"role {b.rid} already created")
        self.roles[b.rid] = b.rn
        return []

    def _delete_role(self, b: DeleteRole) -> list[Permission]:
        self._require_role(b.rid)
        revoked = [Permission(uid, p.did, p.pt, p.sv) for uid, p in re_evaluate(self, b.rid)]
        for uid in list(self.map_ru.get(b.rid, ())):
            _discard(self.map_ur, uid, b.rid)
        self.map_ru.pop(b.rid, None)
        for did, pt, sv in sorted(self.role_perms.pop(b.rid, ()), key=codec.encode):
            if self.tree is not None:
                self.tree.revoke(did, Grant(b.rid, pt, sv))
        del self.roles[b.rid]
        self.retired.add(b.rid)
        return revoked

    def _assign_role_user(self, b: AssignRoleUser) -> list[Permission]:
        self._require_role(b.rid)
        _add(self.map_ur, b.uid, b.rid)
        _add(self.map_ru, b.rid, b.uid)
        return []

    def _remove_role_user(self, b: RemoveRoleUser) -> list[Permission]:
        self._require_role(b.rid)
        if b.rid not in self.map_ur.get(b.uid, ()):
            raise UnknownReference("user does not hold role")
        lost = self.perms_of(b.rid) - self._perms_via(b.uid, exclude=b.rid)
        _discard(self.map_ur, b.uid, b.rid)
        _discard(self.map_ru, b.rid, b.uid)
        return [Permission(b.uid, *rp) for rp in sorted(lost, key=codec.encode)]

    def _assign_role_permission(self, b: AssignRolePermission) -> list[Permission]:
        self._require_role(b.rid)
        if b.did != self.domain or self.tree is None:
            self._require_device(b.did)
        _add(self.role_perms, b.rid, (b.did, b.pt, b.sv))
        if self.tree is not None:
            self.tree.assign(b.did, Grant(b.rid, b.pt, b.sv))
        return []

    def _revoke_role_permission(self, b: RevokeRolePermission) -> list[Permission]:
        self._require_role(b.rid)
        rp = (b.did, b.pt, b.sv)
        if rp not in self.perms_of(b.rid):
            raise UnknownReference("role does not hold permission")
        _discard(self.role_perms, b.rid, rp)
        if self.tree is not None:
            self.tree.revoke(b.did, Grant(b.rid, b.pt, b.sv))
        return [
            Permission(uid, *rp)
            for uid in sorted(self.map_ru.get(b.rid, ()))
            if rp not in self._perms_via(uid, exclude=b.rid)
        ]

    def _perms_via(self, uid: EntityId, exclude: EntityId) -> set[RolePerm]:
        out: set[RolePerm] = set()
        for r in self.map_ur.get(uid, ()):
            if r != exclude:
                out |= self.perms_of(r)
        return out

    def _new_attribute(self, b: NewAttribute) -> list[Permission]:
        if b.domain != self.domain:
            raise UnknownReference("attribute for another domain")
        if b.aid in self.attrs or b.aid in self.retired:
            raise DuplicateEntity(f"attribute {b.aid} already created")
        self.attrs[b.aid] = b.aname
        return []

    def _delete_attribute(self, b: DeleteAttribute) -> list[Permission]:
        self._require_attr(b.aid)
        for uid in self.attr_users.pop(b.aid, ()):
            _discard(self.user_attrs, uid, b.aid)
        for pair in self.attr_devices.pop(b.aid, ()):
            _discard(self.device_attrs, pair, b.aid)
        self.attr_perms = {p for p in self.attr_perms if b.aid not in (p[0], p[1])}
        del self.attrs[b.aid]
        self.retired.add(b.aid)
        return []

    def _assign_attribute_device(self, b: AssignAttributeDevice) -> list[Permission]:
        self._require_attr(b.aid)
        self._require_device(b.did)
        _add(self.attr_devices, b.aid, (b.did, b.sv))
        _add(self.device_attrs, (b.did, b.sv), b.aid)
        return []

    def _remove_attribute_device(self, b: RemoveAttributeDevice) -> list[Permission]:
        self._require_attr(b.aid)
        if (b.did, b.sv) not in self.attr_devices.get(b.aid, ()):
            raise UnknownReference("device does not carry attribute")
        _discard(self.attr_devices, b.aid, (b.did, b.sv))
        _discard(self.device_attrs, (b.did, b.sv), b.aid)
        return []

    def _assign_attribute_user(self, b: AssignAttributeUser) -> list[Permission]:
        self._require_attr(b.aid)
        _add(self.attr_users, b.aid, b.uid)
        _add(self.user_attrs, b.uid, b.aid)
        return []

    def _remove_attribute_user(self, b: RemoveAttributeUser) -> list[Permission]:
        self._require_attr(b.aid)
        if b.uid not in self.attr_users.get(b.aid, ()):
            raise UnknownReference("user does not carry attribute")
        _discard(self.attr_users, b.aid, b.uid)
        _discard(self.user_attrs, b.uid, b.aid)
        return []

    def _assign_attribute_permission(self, b: AssignAttributePermission) -> list[Permission]:
        self._require_attr(b.aid_user)
        self._require_attr(b.aid_device)
        self.attr_perms.add((b.aid_user, b.aid_device, b.pt))
        return []

    def _revoke_attribute_permission(self, b: RevokeAttributePermission) -> list[Permission]:
        key = (b.aid_user, b.aid_device, b.pt)
        if key not in self.attr_perms:
            raise UnknownReference("no such attribute permission")
        self.attr_perms.discard(key)
        return []

    _handlers: dict[type, Callable] = {
        DeviceRegistration: _device_registration,
        DeviceRevocation: _device_revocation,
        PermissionGranted: _permission_granted,
        PermissionRevoked: _permission_revoked,
        TrustUser: _trust,
        DistrustUser: _distrust,
        NewRole: _new_role,
        DeleteRole: _delete_role,
        AssignRoleUser: _assign_role_user,
        RemoveRoleUser: _remove_role_user,
        AssignRolePermission: _assign_role_permission,
        RevokeRolePermission: _revoke_role_permission,
        NewAttribute: _new_attribute,
        DeleteAttribute: _delete_attribute,
        AssignAttributeDevice: _assign_attribute_device,
        RemoveAttributeDevice: _remove_attribute_device,
        AssignAttributeUser: _assign_attribute_user,
        RemoveAttributeUser: _remove_attribute_user,
        AssignAttributePermission: _assign_attribute_permission,
        RevokeAttributePermission: _revoke_attribute_permission,
    }

    # -- decisions ---------------------------------------------------------

    def check(self, req: Request, now: int, consume: bool = False) -> Decision:
        uid, did, pt, sv = req
        record = self.devices.get(did)
        if record is None:
            return Decision.reject("unknown-device")
        if uid == record.owner:
            return Decision.grant()
        if self.model is PolicyModel.DAC:
            return check_dac(self, req, now, consume)
        if self.model is PolicyModel.RBAC:
            return check_rbac(self, req)
        if self.model is PolicyModel.ABAC:
            return check_abac(self, req)
        if self.model is PolicyModel.RDBAC:
            return check_rdbac(self, req)
        return Decision.reject("unregistered-domain")

    def sweep(self, now: int) -> list[Permission]:
        """Purge expired and exhausted ACL entries."""
        purged = [
            p for key, p in self.acl.items()
            if (p.et is not None and now > p.et) or (p.ul is not None and self.uses.get(key, 0) >= p.ul)
        ]
        for p in purged:
            del self.acl[p.request]
            self.uses.pop(p.request, None)
        return purged

    # -- serialization -----------------------------------------------------

    def canonical(self) -> bytes:
        """Deterministic encoding of the ledger-derived state."""
        state = (
            self.domain, self.model, self.owner, self.admin,
            frozenset((did, r.owner, r.services, r.parent) for did, r in self.devices.items()),
            frozenset(self.trusted),
            frozenset(self.acl.values()),
            frozenset(self.roles.items()),
            frozenset(self.retired),
            frozenset((u, frozenset(rs)) for u, rs in self.map_ur.items()),
            frozenset((r, frozenset(us)) for r, us in self.map_ru.items()),
            frozenset((r, frozenset(ps)) for r, ps in self.role_perms.items()),
            frozenset(self.attrs.items()),
            frozenset((a, frozenset(us)) for a, us in self.attr_users.items()),
            frozenset((a, frozenset(ds)) for a, ds in self.attr_devices.items()),
            frozenset(self.attr_perms),
            self._tree_state(),
        )
        return codec.encode(state)

    def _tree_state(self):
        if self.tree is None:
            return None
        return frozenset(
            (did, n.parent, n.control, frozenset(n.dc), frozenset(tuple(g) for g in n.ps),
             frozenset(tuple(g) for g in n.eps))
            for did, n in self.tree.nodes.items()
        )


def check_dac(sdp: ShadowDP, req: Request, now: int, consume: bool = True) -> Decision:
    """ACL lookup; expired or exhausted entries are purged on access.

    With ``consume`` a grant counts against the entry's usage limit.
    """
    entry = sdp.acl.get(req)
    if entry is None:
        return Decision.reject("no-grant")
    if entry.et is not None and now > entry.et:
        del sdp.acl[req]
        sdp.uses.pop(req, None)
        return Decision.reject("expired")
    if entry.ul is not None:
        used = sdp.uses.get(req, 0)
        if used >= entry.ul:
            del sdp.acl[req]
            sdp.uses.pop(req, None)
            return Decision.reject("exhausted")
        if consume:
            sdp.uses[req] = used + 1
    return Decision.grant(entry.et, entry.ul)


def check_rbac(sdp: ShadowDP, req: Request) -> Decision:
    uid, did, pt, sv = req
    for rid in sdp.map_ur.get(uid, ()):
        if (did, pt, sv) in sdp.role_perms.get(rid, ()):
            return Decision.grant()
    return Decision.reject("no-role-permission")


def check_abac(sdp: ShadowDP, req: Request) -> Decision:
    uid, did, pt, sv = req
    device_aids = sdp.device_attrs.get((did, sv), ())
    for au in sdp.user_attrs.get(uid, ()):
        for ad in device_aids:
            if (au, ad, pt) in sdp.attr_perms:
                return Decision.grant()
    return Decision.reject("no-attribute-permission")


def check_rdbac(sdp: ShadowDP, req: Request) -> Decision:
    uid, did, pt, sv = req
    roles = sdp.map_ur.get(uid, ())
    if sdp.tree is not None and roles and sdp.tree.validate_any(roles, did, pt, sv):
        return Decision.grant()
    return Decision.reject("no-hierarchy-permission")


def re_evaluate(sdp: ShadowDP, rid: EntityId) -> list[tuple[EntityId, Permission]]:
    """Permissions each member of ``rid`` loses when the role is deleted.

    For every user the deleted role is excluded before collecting what the
    remaining roles still provide; the result lists ``(uid, Permission(rid, ...))``
    pairs in a stable order.  State is not modified.
    """
    if rid not in sdp.roles:
        raise UnknownReference(f"role {rid} unknown")
    original = sdp.perms_of(rid)
    out = []
    for uid in sorted(sdp.map_ru.get(rid, ())):
        new_set: set[RolePerm] = set()
        for r in sdp.map_ur.get(uid, ()):
            if r != rid:
                new_set |= sdp.perms_of(r)
        for did, pt, sv in sorted(original - new_set, key=codec.encode):
            out.append((uid, Permission(rid, did, pt, sv)))
    return out


def apply_all(sdp: ShadowDP, txs: Iterable[Transaction]) -> ShadowDP:
    """Apply transactions in order, skipping the ones the state rejects."""
    for tx in txs:
        try:
            sdp.apply(tx)
        except PolicyError as exc:
            log.debug("skipped %s: %s", type(tx.body).__name__, exc)
    return sdp


def rebuild(ledger: Ledger, domain: EntityId) -> ShadowDP:
    return apply_all(ShadowDP(domain), replay(ledger, domain))
