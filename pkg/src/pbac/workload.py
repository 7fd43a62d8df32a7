"""Seeded generators for device trees, control placement, populations and requests.

Everything here is a pure function of its spec and seed.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, TextIO

from .hierarchy import DeviceTree, Grant
from .identity import EntityId, IdFactory, Kind, PermType, Permission
from .ledger import (
    AssignAttributeDevice, AssignAttributePermission, AssignAttributeUser,
    AssignRolePermission, AssignRoleUser, DeleteAttribute, DeleteRole,
    DeviceRegistration, DeviceRevocation, DistrustUser, DomainRegistration,
    NewAttribute, NewRole, PermissionGranted, PermissionRevoked, PolicyModel,
    RemoveAttributeDevice, RemoveAttributeUser, RemoveRoleUser,
    RevokeAttributePermission, RevokeRolePermission, Transaction, TrustUser,
)

PERM_TYPES = tuple(PermType)
SERVICES = ("sv0", "sv1", "sv2")


@dataclass(frozen=True)
class TreeSpec:
    height: int = 10          # number of layers, root included
    degree: float = 20.0      # Poisson mean of children per node
    seed: int = 0
    max_nodes: int = 100_000  # breadth-first budget, root included

    def __post_init__(self) -> None:
        if self.height < 1:
            raise ValueError("height must be >= 1")
        if self.degree <= 0:
            raise ValueError("degree must be > 0")
        if self.max_nodes < 1:
            raise ValueError("max_nodes must be >= 1")


@dataclass(frozen=True)
class PlacementSpec:
    n: int = 1000
    mu: float = 0.6
    sigma: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.n < 0:
            raise ValueError("n must be >= 0")


def _poisson(rng: random.Random, lam: float) -> int:
    # Knuth's product method in chunks keeps exp(-lam) away from underflow
    count = 0
    remaining = lam
    while remaining > 0:
        step = min(remaining, 30.0)
        remaining -= step
        limit, p = math.exp(-step), rng.random()
        while p > limit:
            count += 1
            p *= rng.random()
    return count


def gen_tree(spec: TreeSpec) -> DeviceTree:
    """Breadth-first random tree with integer node ids; the root (0) is the hub."""
    rng = random.Random(spec.seed)
    tree = DeviceTree(root=0)
    queue = deque([0])
    next_id = 1
    while queue and next_id < spec.max_nodes:
        did = queue.popleft()
        if tree.nodes[did].depth >= spec.height - 1:
            continue
        for _ in range(_poisson(rng, spec.degree)):
            if next_id >= spec.max_nodes:
                break
            tree.register_leaf(next_id, did)
            queue.append(next_id)
            next_id += 1
    return tree


def nodes_by_depth(tree: DeviceTree) -> list[list]:
    layers: list[list] = []
    for did in sorted(tree.nodes):
        depth = tree.nodes[did].depth
        while len(layers) <= depth:
            layers.append([])
        layers[depth].append(did)
    return layers


@dataclass(frozen=True)
class Population:
    n_users: int
    n_roles: int
    user_roles: tuple[tuple[int, ...], ...]
    devices: tuple
    services: tuple[str, ...] = SERVICES
    perm_types: tuple = PERM_TYPES


def gen_population(devices, n_users: int = 10_000, n_roles: int = 100, seed: int = 0,
                   roles_per_user: tuple[int, int] = (1, 3)) -> Population:
    rng = random.Random(seed)
    lo, hi = roles_per_user
    user_roles = tuple(
        tuple(sorted(rng.sample(range(n_roles), rng.randint(lo, min(hi, n_roles)))))
        for _ in range(n_users)
    )
    return Population(n_users, n_roles, user_roles, tuple(devices))


def place_controls(tree: DeviceTree, spec: PlacementSpec, population: Optional[Population] = None) -> list[tuple]:
    """Pick ``spec.n`` (node, Grant) pairs skewed toward the configured normalized depth.

    Normalized depth is relative to the deepest existing layer; a draw is
    clamped to [0, 1] and mapped to the nearest layer, then a node is drawn
    uniformly from that layer.
    """
    rng = random.Random(spec.seed)
    layers = nodes_by_depth(tree)
    max_depth = len(layers) - 1
    n_roles = population.n_roles if population else 100
    services = population.services if population else SERVICES
    pts = population.perm_types if population else PERM_TYPES
    out = []
    for _ in range(spec.n):
        z = min(1.0, max(0.0, rng.gauss(spec.mu, spec.sigma)))
        depth = int(math.floor(z * max_depth + 0.5))
        did = rng.choice(layers[depth])
        grant = Grant(rng.randrange(n_roles), rng.choice(pts), rng.choice(services))
        out.append((did, grant))
    return out


def gen_requests(population: Population, count: int, seed: int = 0) -> list[tuple]:
    """Uniform random ``(uid, did, pt, sv)`` tuples over the population."""
    rng = random.Random(seed)
    return [
        (rng.randrange(population.n_users), rng.choice(population.devices),
         rng.choice(population.perm_types), rng.choice(population.services))
        for _ in range(count)
    ]


def dump_population(tree: DeviceTree, placements: list[tuple], population: Population, fp: TextIO) -> None:
    """Edge list, then assignments, then user-role memberships."""
    fp.write(f"# tree nodes={len(tree)}\n")
    fp.write(tree.dump())
    fp.write(f"# assignments n={len(placements)}\n")
    for did, g in placements:
        fp.write(f"{did}\t{g.subject}\t{g.pt.value}\t{g.sv}\n")
    fp.write(f"# users n={population.n_users} roles={population.n_roles}\n")
    for uid, roles in enumerate(population.user_roles):
        fp.write(f"{uid}\t{','.join(map(str, roles))}\n")


# -- random policy histories ---------------------------------------------

@dataclass
class _World:
    owner: EntityId
    domain: EntityId
    users: list[EntityId]
    devices: list[EntityId] = field(default_factory=list)
    revoked: list[EntityId] = field(default_factory=list)
    roles: list[EntityId] = field(default_factory=list)
    attrs: list[EntityId] = field(default_factory=list)
    grants: list[Permission] = field(default_factory=list)


def gen_policy_history(model: PolicyModel, n: int, seed: int = 0, n_users: int = 20,
                       domain: Optional[EntityId] = None, owner: Optional[EntityId] = None,
                       ) -> tuple[EntityId, list[Transaction]]:
    """A random history of ``n`` transactions for one domain.

    Mostly valid operations with some dangling or repeated ones mixed in, so
    rejection paths get exercised too.  Returns the domain id and the
    transactions.  Without ``domain`` a fresh domain is created and its
    registration comes first; with it, the history continues that domain
    (issued by ``owner``).
    """
    rng = random.Random(seed)
    ids = IdFactory(seed ^ 0x5EED)
    txs: list[Transaction] = []
    if domain is None:
        owner = ids.new(Kind.USER)
        domain = ids.new(Kind.DOMAIN)
        txs.append(Transaction(owner, DomainRegistration(domain, owner, model)))
    elif owner is None:
        raise ValueError("owner is required with an existing domain")
    w = _World(owner, domain, [ids.new(Kind.USER) for _ in range(n_users)])

    def emit(body) -> None:
        issuer = owner if rng.random() > 0.02 else rng.choice(w.users)  # occasional unauthorized
        txs.append(Transaction(issuer, body))

    def pick(xs):
        return rng.choice(xs) if xs else None

    def perm_tuple():
        return rng.choice(PERM_TYPES), rng.choice(SERVICES)

    while len(txs) < n:
        r = rng.random()
        if r < 0.08 or not w.devices:
            parent = pick(w.devices) if model is PolicyModel.RDBAC and rng.random() < 0.7 else None
            did = pick(w.revoked) if w.revoked and rng.random() < 0.3 else ids.new(Kind.DEVICE)
            if did in w.revoked:
                w.revoked.remove(did)
                parent = None
            emit(DeviceRegistration(domain, did, owner, SERVICES, parent))
            w.devices.append(did)
        elif r < 0.10:
            did = pick(w.devices)
            emit(DeviceRevocation(did))
            if model is not PolicyModel.RDBAC:
                w.devices.remove(did)
                w.revoked.append(did)
        elif r < 0.13:
            uid = pick(w.users)
            emit(TrustUser(domain, uid) if rng.random() < 0.6 else DistrustUser(domain, uid))
        elif model is PolicyModel.DAC:
            if r < 0.75 or not w.grants:
                pt, sv = perm_tuple()
                et = rng.choice([None, rng.randrange(1, 10**9)])
                ul = rng.choice([None, rng.randint(1, 5)])
                per = Permission(pick(w.users), pick(w.devices), pt, sv, et, ul)
                emit(PermissionGranted(per))
                w.grants.append(per)
            else:
                per = w.grants.pop(rng.randrange(len(w.grants)))
                emit(PermissionRevoked(per))
        elif model in (PolicyModel.RBAC, PolicyModel.RDBAC):
            if r < 0.20 or not w.roles:
                rid = ids.new(Kind.ROLE)
                emit(NewRole(domain, rid, rng.randbytes(4)))
                w.roles.append(rid)
            elif r < 0.23:
                rid = w.roles.pop(rng.randrange(len(w.roles)))
                emit(DeleteRole(rid))
            elif r < 0.50:
                emit(AssignRoleUser(pick(w.roles), pick(w.users)))
            elif r < 0.60:
                emit(RemoveRoleUser(pick(w.roles), pick(w.users)))
            elif r < 0.88:
                emit(AssignRolePermission(pick(w.roles), pick(w.devices), *perm_tuple()))
            else:
                emit(RevokeRolePermission(pick(w.roles), pick(w.devices), *perm_tuple()))
        else:  # ABAC
            if r < 0.20 or len(w.attrs) < 2:
                aid = ids.new(Kind.ATTRIBUTE)
                emit(NewAttribute(domain, aid, rng.randbytes(4)))
                w.attrs.append(aid)
            elif r < 0.22:
                aid = w.attrs.pop(rng.randrange(len(w.attrs)))
                emit(DeleteAttribute(aid))
            elif r < 0.40:
                emit(AssignAttributeUser(pick(w.attrs), pick(w.users)))
            elif r < 0.46:
                emit(RemoveAttributeUser(pick(w.attrs), pick(w.users)))
            elif r < 0.64:
                emit(AssignAttributeDevice(pick(w.attrs), pick(w.devices), rng.choice(SERVICES)))
            elif r < 0.70:
                emit(RemoveAttributeDevice(pick(w.attrs), pick(w.devices), rng.choice(SERVICES)))
            elif r < 0.90:
                emit(AssignAttributePermission(pick(w.attrs), pick(w.attrs), rng.choice(PERM_TYPES)))
            else:
                emit(RevokeAttributePermission(pick(w.attrs), pick(w.attrs), rng.choice(PERM_TYPES)))
    return domain, txs[:n]

