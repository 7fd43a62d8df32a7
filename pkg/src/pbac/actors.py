"""Protocol actors: client, device, AC hub and validator.

Every actor is a sequential state machine driven by the simulator.  Policy
changes reach hubs and validators only through :class:`Consensus`, the single
commit path onto the shared ledger.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .identity import (
    EntityId, IdFactory, KeyPair, Kind, Permission, SessionKey, Token,
    canonical_encode, keygen_for, sign, sign_token, verify, verify_token,
)
from .ledger import (
    DeleteAttribute, DeleteRole, DeviceRegistration, DeviceRevocation,
    DomainIndex, DomainRegistration, EndorsedToken, Ledger, PermissionRevoked,
    PolicyModel, RemoveAttributeDevice, RemoveAttributeUser, RemoveRoleUser,
    RevokeAttributePermission, RevokeRolePermission, Transaction, append_block,
)
from .netsim import Actor, NetConfig, Simulator
from .policy import PolicyError, ShadowDP, rebuild

log = logging.getLogger(__name__)


def quorum_size(n: int) -> int:
    return n // 2 + 1


@dataclass
class Timings:
    """Processing charges and protocol timers, all in microseconds."""

    hub_us: int = 1_000
    validator_us: int = 1_000
    device_us: int = 200
    endorse_timeout_us: int = 1_650_000  # 10x the default internet P99
    client_timeout_us: int = 30_000_000
    connect_grace_us: int = 50_000
    sweep_us: int = 60_000_000


def _short(req: tuple) -> str:
    uid, did, pt, sv = req
    return f"{uid}>{did}:{pt.value}:{sv or ''}"


# -- messages --------------------------------------------------------------

@dataclass(frozen=True)
class StartRequest:
    req: tuple
    tag: Any = None

    def trace_detail(self) -> str:
        return _short(self.req)


@dataclass(frozen=True)
class AccessRequest:
    req: tuple

    def trace_detail(self) -> str:
        return _short(self.req)


@dataclass(frozen=True)
class TokenGrant:
    req: tuple
    token: Token

    def trace_detail(self) -> str:
        return f"{_short(self.req)} sigs={len(self.token.signatures)}"


@dataclass(frozen=True)
class AccessReject:
    req: tuple
    reason: str

    def trace_detail(self) -> str:
        return f"{_short(self.req)} {self.reason}"


@dataclass(frozen=True)
class InstallKey:
    key: SessionKey

    def trace_detail(self) -> str:
        return self.key.key_id.hex()[:12]


@dataclass(frozen=True)
class RevokeKey:
    rev_id: int
    req: tuple

    def trace_detail(self) -> str:
        return f"rev={self.rev_id} {_short(self.req)}"


@dataclass(frozen=True)
class KeyRevoked:
    rev_id: int
    removed: int

    def trace_detail(self) -> str:
        return f"rev={self.rev_id} removed={self.removed}"


@dataclass(frozen=True)
class Connect:
    token: Token

    def trace_detail(self) -> str:
        return _short(self.token.per.request)


@dataclass(frozen=True)
class ConnectResult:
    req: tuple
    ok: bool
    reason: str = ""

    def trace_detail(self) -> str:
        return f"{_short(self.req)} {'accept' if self.ok else 'reject:' + self.reason}"


@dataclass(frozen=True)
class SessionTerminated:
    req: tuple

    def trace_detail(self) -> str:
        return _short(self.req)


@dataclass(frozen=True)
class EndorseRequest:
    round: str
    token: Token
    deadline: Optional[int] = None  # full path only: no votes or commits after it

    def trace_detail(self) -> str:
        return self.round


@dataclass(frozen=True)
class Vote:
    round: str
    voter: EntityId
    signature: bytes

    def trace_detail(self) -> str:
        return f"{self.round} by={self.voter}"


@dataclass(frozen=True)
class Endorsement:
    round: str
    token: Token

    def trace_detail(self) -> str:
        return f"{self.round} sigs={len(self.token.signatures)}"


@dataclass(frozen=True)
class _Timer:
    kind: str
    ref: Any = None

    def trace_detail(self) -> str:
        return f"{self.kind} {self.ref}"


# -- commit path -----------------------------------------------------------

class QuorumError(Exception):
    pass


class Consensus:
    """Single writer onto the ledger; fans committed transactions out to subscribers."""

    def __init__(self, ledger: Ledger, n_validators: int):
        self.ledger = ledger
        self.quorum = quorum_size(n_validators)
        self.subscribers: list[Callable[[Transaction], None]] = []
        self.rounds: dict[str, int] = {}

    def commit(self, txs: list[Transaction], round: Optional[str] = None) -> bool:
        if round is not None and round in self.rounds:
            return False
        for tx in txs:
            if isinstance(tx.body, EndorsedToken):
                signers = {s for s in tx.body.token.signers if s.kind is Kind.VALIDATOR}
                if len(signers) < self.quorum:
                    raise QuorumError(f"endorsement with {len(signers)} validator signatures")
        block = append_block(self.ledger, txs)
        if round is not None:
            self.rounds[round] = block.height
        for tx in txs:
            for callback in list(self.subscribers):
                callback(tx)
        return True


# -- client ----------------------------------------------------------------

@dataclass
class Outcome:
    tag: Any
    req: tuple
    start: int
    end: int
    status: str  # connected | rejected | failed | timeout

    @property
    def latency(self) -> int:
        return self.end - self.start


class ClientActor(Actor):
    def __init__(self, name: str, site: str, uid: EntityId, hub: str, devices: dict[EntityId, str],
                 timings: Timings, sink: Optional[list] = None):
        super().__init__(name, site)
        self.uid = uid
        self.hub = hub
        self.devices = devices
        self.timings = timings
        self.cache: dict[tuple, Token] = {}
        self.pending: dict[tuple, dict] = {}
        self.outcomes: list[Outcome] = sink if sink is not None else []

    def receive(self, src: str, msg: Any) -> None:
        if isinstance(msg, StartRequest):
            self._start(msg)
        elif isinstance(msg, TokenGrant):
            state = self.pending.get(msg.req)
            if state is None:
                return
            self.cache[msg.req] = msg.token
            state["cached"] = False
            self.send(self.devices[msg.req[1]], Connect(msg.token))
        elif isinstance(msg, AccessReject):
            self._finish(msg.req, "rejected")
        elif isinstance(msg, ConnectResult):
            state = self.pending.get(msg.req)
            if state is None:
                return
            if msg.ok:
                self._finish(msg.req, "connected")
            elif state["cached"]:
                # dead session key or expired token: fall back to the hub
                self.cache.pop(msg.req, None)
                state["cached"] = False
                self.send(self.hub, AccessRequest(msg.req))
            else:
                self._finish(msg.req, "failed")
        elif isinstance(msg, SessionTerminated):
            self.cache.pop(msg.req, None)
            self.sim.state(self.name, "session-terminated", _short(msg.req))
        elif isinstance(msg, _Timer) and msg.kind == "client-timeout":
            state = self.pending.get(msg.ref[0])
            if state is not None and state["serial"] == msg.ref[1]:
                self._finish(msg.ref[0], "timeout")

    def _start(self, msg: StartRequest) -> None:
        req = msg.req
        serial = len(self.outcomes) + len(self.pending)
        state = {"start": self.sim.now, "tag": msg.tag, "cached": False, "serial": serial}
        self.pending[req] = state
        self.timer(self.timings.client_timeout_us, _Timer("client-timeout", (req, serial)))
        token = self.cache.get(req)
        if token is not None and token.per.et is not None and self.sim.now > token.per.et:
            del self.cache[req]
            token = None
        if token is not None:
            state["cached"] = True
            self.send(self.devices[req[1]], Connect(token))
        else:
            self.send(self.hub, AccessRequest(req))

    def _finish(self, req: tuple, status: str) -> None:
        state = self.pending.pop(req, None)
        if state is None:
            return
        if status != "connected":
            self.cache.pop(req, None)
        self.outcomes.append(Outcome(state["tag"], req, state["start"], self.sim.now, status))
        self.sim.state(self.name, f"request-{status}", _short(req))


# -- device ----------------------------------------------------------------

class DeviceActor(Actor):
    def __init__(self, name: str, site: str, did: EntityId, hub_id: EntityId,
                 directory: dict[EntityId, bytes], timings: Timings):
        super().__init__(name, site)
        self.did = did
        self.hub_id = hub_id
        self.directory = directory
        self.timings = timings
        self.keys: dict[bytes, SessionKey] = {}
        self.uses: dict[bytes, int] = {}
        self.parked: list[tuple[str, Connect, int]] = []

    def reboot(self) -> None:
        self.keys.clear()
        self.uses.clear()
        self.parked.clear()
        self.sim.state(self.name, "reboot")

    def receive(self, src: str, msg: Any) -> None:
        if isinstance(msg, InstallKey):
            self.keys[msg.key.key_id] = msg.key
            parked, self.parked = self.parked, []
            for client, connect, _ in parked:
                if connect.token.per == msg.key.per:
                    self._connect(client, connect, park=False)
                else:
                    self.parked.append((client, connect, _))
        elif isinstance(msg, RevokeKey):
            gone = [k for k, sk in self.keys.items() if sk.per.request == msg.req]
            for k in gone:
                del self.keys[k]
                self.uses.pop(k, None)
            self.send(src, KeyRevoked(msg.rev_id, len(gone)), self.timings.device_us)
        elif isinstance(msg, Connect):
            self._connect(src, msg, park=True)
        elif isinstance(msg, _Timer) and msg.kind == "grace":
            still = [p for p in self.parked if p[2] == msg.ref]
            self.parked = [p for p in self.parked if p[2] != msg.ref]
            for client, connect, _ in still:
                self._connect(client, connect, park=False)

    def _connect(self, client: str, msg: Connect, park: bool) -> None:
        per = msg.token.per
        now = self.sim.now
        key_id = next(
            (k for k, sk in self.keys.items()
             if sk.per == per and (per.ul is None or self.uses.get(k, 0) < per.ul)),
            None,
        )
        reason = ""
        if key_id is None:
            if park and any(sk.per == per for sk in self.keys.values()):
                reason = "exhausted"
            elif park:
                ref = self.sim._seq
                self.parked.append((client, msg, ref))
                self.timer(self.timings.connect_grace_us, _Timer("grace", ref))
                return
            else:
                reason = "no-session-key"
        elif self.hub_id not in msg.token.signers or not verify_token(msg.token, self.directory):
            reason = "bad-signature"
        elif per.et is not None and now > per.et:
            reason = "expired"
        if reason:
            self.send(client, ConnectResult(per.request, False, reason), self.timings.device_us)
            return
        self.uses[key_id] = self.uses.get(key_id, 0) + 1
        self.send(client, ConnectResult(per.request, True), self.timings.device_us)


# -- hub -------------------------------------------------------------------

@dataclass
class Pending:
    req: tuple
    token: Token
    client: str
    key: SessionKey
    shortcut: bool
    started: int


@dataclass
class HubState:
    hid: EntityId
    sdp: ShadowDP
    pending: dict[str, Pending] = field(default_factory=dict)
    sessions: dict[bytes, tuple[SessionKey, str]] = field(default_factory=dict)
    revoking: dict[int, Permission] = field(default_factory=dict)
    rounds: int = 0


def hub_recover(ledger: Ledger, domain: EntityId, hid: EntityId) -> HubState:
    """Fresh hub state rebuilt from the ledger; volatile pending sets start empty."""
    return HubState(hid, rebuild(ledger, domain))


_REDUCING = (
    DeviceRevocation, PermissionRevoked, DeleteRole, RemoveRoleUser,
    RevokeRolePermission, DeleteAttribute, RemoveAttributeDevice,
    RemoveAttributeUser, RevokeAttributePermission,
)


class HubActor(Actor):
    def __init__(self, name: str, site: str, state: HubState, kp: KeyPair,
                 consensus: Consensus, directory: dict[EntityId, bytes],
                 validators: list[str], devices: dict[EntityId, str], timings: Timings):
        super().__init__(name, site)
        self.state = state
        self.kp = kp
        self.consensus = consensus
        self.directory = directory
        self.validators = validators
        self.devices = devices
        self.timings = timings
        self.index = DomainIndex()
        self.crashed = False
        self._rev_seq = 0
        self.timed_out: set[str] = set()
        self.swept: list[Permission] = []

    @property
    def sdp(self) -> ShadowDP:
        return self.state.sdp

    def start(self) -> None:
        self.timer(self.timings.sweep_us, _Timer("sweep"), daemon=True)

    # committed transactions arrive here through the consensus fan-out
    def on_commit(self, tx: Transaction) -> None:
        if self.crashed or self.index.domain_of(tx) != self.sdp.domain:
            return
        try:
            revoked = self.sdp.apply(tx)
        except PolicyError as exc:
            log.debug("hub %s skipped tx: %s", self.name, exc)
            return
        if revoked or isinstance(tx.body, _REDUCING):
            self._revalidate_sessions()

    def _revalidate_sessions(self) -> None:
        now = self.sim.now if self.sim else 0
        for key_id, (key, client) in list(self.state.sessions.items()):
            decision = self.sdp.check(key.per.request, now)
            # a spent issuance budget does not void tokens already issued
            if not decision.granted and decision.reason != "exhausted":
                self._terminate(key_id, "policy-change")

    def _terminate(self, key_id: bytes, why: str) -> None:
        key, client = self.state.sessions.pop(key_id)
        device = self.devices.get(key.per.did)
        self._rev_seq += 1
        if device is not None:
            self.send(device, RevokeKey(self._rev_seq, key.per.request))
        self.send(client, SessionTerminated(key.per.request))
        self.sim.state(self.name, "session-revoked", f"{why} {_short(key.per.request)}")

    def receive(self, src: str, msg: Any) -> None:
        if self.crashed:
            return
        if isinstance(msg, AccessRequest):
            self._validate(src, msg.req)
        elif isinstance(msg, Endorsement):
            self._endorsed(msg)
        elif isinstance(msg, KeyRevoked):
            self._revocation_acked(msg)
        elif isinstance(msg, _Timer):
            if msg.kind == "endorse-timeout":
                self._endorse_timeout(msg.ref)
            elif msg.kind == "sweep":
                self.swept.extend(self.sdp.sweep(self.sim.now))
                self.timer(self.timings.sweep_us, _Timer("sweep"), daemon=True)

    def _validate(self, client: str, req: tuple) -> None:
        t = self.timings
        now = self.sim.now
        uid, did, pt, sv = req
        if any(p.request == req for p in self.state.revoking.values()):
            decision_reason = "pending-revoke"
            granted = None
        else:
            decision = self.sdp.check(req, now, consume=True)
            granted = decision if decision.granted else None
            decision_reason = decision.reason
        if granted is None or did not in self.devices:
            self.send(client, AccessReject(req, decision_reason or "unknown-device"), t.hub_us)
            return
        per = Permission(uid, did, pt, sv, granted.et, granted.ul)
        token = sign_token(per, self.state.hid, self.kp)
        self.state.rounds += 1
        round = f"{self.name}#{self.state.rounds}"
        key = SessionKey(per, hashlib.sha256(round.encode()).digest()[:16])
        shortcut = self.sdp.is_trusted(uid)
        depart = now + t.hub_us
        self.state.pending[round] = Pending(req, token, client, key, shortcut, depart)
        if shortcut:
            self.send(self.devices[did], InstallKey(key), t.hub_us)
            self.send(client, TokenGrant(req, token), t.hub_us)
            self.state.sessions[key.key_id] = (key, client)
            self.sim.state(self.name, "shortcut-grant", f"{round} at={depart}")
        else:
            self.sim.state(self.name, "endorse-wait-begin", f"{round} at={depart}")
        deadline = None if shortcut else depart + t.endorse_timeout_us
        for v in self.validators:
            self.send(v, EndorseRequest(round, token, deadline), t.hub_us)
        self.timer(t.hub_us + t.endorse_timeout_us, _Timer("endorse-timeout", round))

    def _endorsed(self, msg: Endorsement) -> None:
        p = self.state.pending.get(msg.round)
        if p is None:
            if msg.round in self.timed_out:
                # committed just before the deadline but arrived after the timeout
                self.timed_out.discard(msg.round)
                self.sim.state(self.name, "late-endorsement", msg.round)
            return
        token = msg.token
        validators = {s for s in token.signers if s.kind is Kind.VALIDATOR}
        if (token.per != p.token.per or self.state.hid not in token.signers
                or len(validators) < self.consensus.quorum or not verify_token(token, self.directory)):
            self.sim.state(self.name, "bad-endorsement", msg.round)
            return
        del self.state.pending[msg.round]
        if p.shortcut:
            self.sim.state(self.name, "shortcut-endorsed", msg.round)
            return
        self.sim.state(self.name, "endorse-wait-end", f"{msg.round} at={self.sim.now}")
        self.send(self.devices[p.req[1]], InstallKey(p.key))
        self.send(p.client, TokenGrant(p.req, token))
        self.state.sessions[p.key.key_id] = (p.key, p.client)

    def _endorse_timeout(self, round: str) -> None:
        p = self.state.pending.get(round)
        if p is None:
            return
        now = self.sim.now
        if p.shortcut:
            heal = self.sim.internet_heal_time(p.started, now)
            if heal is not None:
                # offline operation: keep the local grant and wait for the link
                self.sim.state(self.name, "endorse-deferred", f"{round} heal={heal}")
                delay = max(heal - now, 0) + self.timings.endorse_timeout_us
                self.timer(delay, _Timer("endorse-timeout", round))
                return
            del self.state.pending[round]
            self.sim.state(self.name, "shortcut-endorse-failed", round)
            if p.key.key_id in self.state.sessions:
                self._terminate(p.key.key_id, "endorsement-failed")
        else:
            del self.state.pending[round]
            self.timed_out.add(round)
            self.sim.state(self.name, "endorse-timeout", round)
            self.send(p.client, AccessReject(p.req, "endorsement-timeout"))

    def revoke_permission(self, per: Permission) -> bool:
        """Start revoking a DAC grant; new tokens for it are denied until the device acks."""
        if per.request not in self.sdp.acl:
            log.warning("revoke of unknown grant %s", _short(per.request))
            return False
        per = self.sdp.acl[per.request]
        self._rev_seq += 1
        self.state.revoking[self._rev_seq] = per
        self.sim.state(self.name, "revoke-pending", f"rev={self._rev_seq} {_short(per.request)}")
        self.send(self.devices[per.did], RevokeKey(self._rev_seq, per.request))
        return True

    def _revocation_acked(self, msg: KeyRevoked) -> None:
        per = self.state.revoking.pop(msg.rev_id, None)
        if per is None:
            return
        for key_id, (key, _) in list(self.state.sessions.items()):
            if key.per.request == per.request:
                del self.state.sessions[key_id]
        self.consensus.commit([Transaction(self.state.hid, PermissionRevoked(per))])
        self.sim.state(self.name, "revoke-committed", f"rev={msg.rev_id}")


# -- validator -------------------------------------------------------------

@dataclass
class _Round:
    token: Optional[Token] = None
    hub: Optional[str] = None
    voted: bool = False
    votes: dict = field(default_factory=dict)
    done: bool = False
    deadline: Optional[int] = None

    def expired(self, now: int) -> bool:
        return self.deadline is not None and now > self.deadline


class ValidatorActor(Actor):
    def __init__(self, name: str, site: str, vid: EntityId, kp: KeyPair, consensus: Consensus,
                 directory: dict[EntityId, bytes], timings: Timings):
        super().__init__(name, site)
        self.vid = vid
        self.kp = kp
        self.consensus = consensus
        self.directory = directory
        self.timings = timings
        self.peers: list[str] = []
        self.index = DomainIndex()
        self.sdps: dict[EntityId, ShadowDP] = {}
        self.rounds: dict[str, _Round] = {}
        self.diverged = False

    def on_commit(self, tx: Transaction) -> None:
        domain = self.index.domain_of(tx)
        if domain is None:
            return
        if isinstance(tx.body, DomainRegistration) and domain not in self.sdps:
            self.sdps[domain] = ShadowDP(domain)
        sdp = self.sdps.get(domain)
        if sdp is not None:
            try:
                sdp.apply(tx)
            except PolicyError:
                pass

    def _domain_of(self, did: EntityId) -> Optional[ShadowDP]:
        domain = self.index._entity.get(did)
        return self.sdps.get(domain) if domain is not None else None

    def receive(self, src: str, msg: Any) -> None:
        if isinstance(msg, EndorseRequest):
            r = self.rounds.setdefault(msg.round, _Round())
            r.token, r.hub, r.deadline = msg.token, src, msg.deadline
            self.timer(self.timings.validator_us, _Timer("check", msg.round))
        elif isinstance(msg, _Timer) and msg.kind == "check":
            self._check(msg.ref)
        elif isinstance(msg, Vote):
            r = self.rounds.setdefault(msg.round, _Round())
            r.votes[msg.voter] = msg.signature
            if r.token is not None:
                self._maybe_endorse(msg.round)

    def _check(self, round: str) -> None:
        r = self.rounds[round]
        if r.expired(self.sim.now):
            self.sim.state(self.name, "expired", round)
            return
        token = r.token
        per = token.per
        signer = token.signatures[0][0]
        ok = signer.kind is Kind.HUB and verify_token(token, self.directory)
        sdp = self._domain_of(per.did)
        if ok and sdp is not None and not self.diverged:
            d = sdp.check(per.request, self.sim.now, consume=False)
            # validators must agree with the hub's et/ul, not just the grant
            ok = d.granted and (d.et, d.ul) == (per.et, per.ul)
        else:
            ok = False
        if not ok:
            self.sim.state(self.name, "dissent", round)
            return
        sig = sign(self.kp, canonical_encode(per))
        r.voted = True
        r.votes[self.vid] = sig
        for peer in self.peers:
            self.send(peer, Vote(round, self.vid, sig))
        self._maybe_endorse(round)

    def _maybe_endorse(self, round: str) -> None:
        r = self.rounds[round]
        if r.done or not r.voted or r.token is None or len(r.votes) < self.consensus.quorum:
            return
        if r.expired(self.sim.now):
            return
        msg = canonical_encode(r.token.per)
        valid = {v: s for v, s in r.votes.items()
                 if v in self.directory and verify(self.directory[v], msg, s)}
        if len(valid) < self.consensus.quorum:
            return
        r.done = True
        token = r.token
        for v in sorted(valid)[: self.consensus.quorum]:
            token = token.with_signature(v, valid[v])
        self.consensus.commit([Transaction(self.vid, EndorsedToken(token))], round=round)
        self.send(r.hub, Endorsement(round, token))


# -- deployment ------------------------------------------------------------

@dataclass
class Domain:
    domain: EntityId
    owner: EntityId
    hub: HubActor
    site: str
    devices: dict[EntityId, str] = field(default_factory=dict)


class Deployment:
    """Wires a simulator, ledger, validators and per-domain hubs together."""

    def __init__(self, seed: int = 0, net: Optional[NetConfig] = None, n_validators: int = 4,
                 timings: Optional[Timings] = None):
        self.seed = seed
        self.sim = Simulator(net or NetConfig(), seed)
        self.ids = IdFactory(seed)
        self.ledger = Ledger()
        self.consensus = Consensus(self.ledger, n_validators)
        self.timings = timings or Timings()
        self.directory: dict[EntityId, bytes] = {}
        self.domains: list[Domain] = []
        self.validators: list[ValidatorActor] = []
        self.outcomes: list[Outcome] = []
        for i in range(n_validators):
            vid = self.ids.new(Kind.VALIDATOR)
            kp = self._keys(vid)
            v = ValidatorActor(f"val{i}", f"wan:val{i}", vid, kp, self.consensus, self.directory, self.timings)
            self.sim.add(v)
            self.consensus.subscribers.append(v.on_commit)
            self.validators.append(v)
        names = [v.name for v in self.validators]
        for v in self.validators:
            v.peers = [n for n in names if n != v.name]

    def _keys(self, entity: EntityId) -> KeyPair:
        kp = keygen_for(entity, self.seed)
        self.directory[entity] = kp.public
        return kp

    def new_user(self) -> EntityId:
        return self.ids.new(Kind.USER)

    def add_domain(self, model: PolicyModel = PolicyModel.DAC, owner: Optional[EntityId] = None) -> Domain:
        idx = len(self.domains)
        domain_id = self.ids.new(Kind.DOMAIN)
        owner = owner or self.new_user()
        hid = self.ids.new(Kind.HUB)
        kp = self._keys(hid)
        site = f"lan{idx}"
        dom = Domain(domain_id, owner, None, site)  # type: ignore[arg-type]
        hub = HubActor(f"hub{idx}", site, HubState(hid, ShadowDP(domain_id)), kp, self.consensus,
                       self.directory, [v.name for v in self.validators], dom.devices, self.timings)
        dom.hub = hub
        self.sim.add(hub)
        self.consensus.subscribers.append(hub.on_commit)
        hub.start()
        self.domains.append(dom)
        self.submit(dom, DomainRegistration(domain_id, owner, model))
        return dom

    def submit(self, dom: Domain, body: Any, issuer: Optional[EntityId] = None) -> None:
        self.consensus.commit([Transaction(issuer or dom.hub.state.hid, body)])

    def add_device(self, dom: Domain, services: tuple[str, ...] = ("sv",), parent: Optional[EntityId] = None,
                   owner: Optional[EntityId] = None) -> DeviceActor:
        did = self.ids.new(Kind.DEVICE)
        name = f"dev{self.domains.index(dom)}.{len(dom.devices)}"
        dev = DeviceActor(name, dom.site, did, dom.hub.state.hid, self.directory, self.timings)
        self.sim.add(dev)
        dom.devices[did] = name
        self.submit(dom, DeviceRegistration(dom.domain, did, owner or dom.owner, tuple(services), parent))
        return dev

    def add_client(self, dom: Domain, uid: EntityId, name: str, intranet: bool = False) -> ClientActor:
        site = dom.site if intranet else f"wan:{name}"
        client = ClientActor(name, site, uid, dom.hub.name, dom.devices, self.timings, self.outcomes)
        if name in self.sim.actors:
            self.sim.replace(client)
        else:
            self.sim.add(client)
        return client

    def request(self, client: ClientActor, req: tuple, at: Optional[int] = None, tag: Any = None) -> None:
        self.sim.schedule(self.sim.now if at is None else at, client.name, StartRequest(req, tag))

    def crash_hub(self, dom: Domain) -> None:
        dom.hub.crashed = True
        self.sim.state(dom.hub.name, "crash")

    def recover_hub(self, dom: Domain) -> HubActor:
        old = dom.hub
        state = hub_recover(self.ledger, dom.domain, old.state.hid)
        hub = HubActor(old.name, old.site, state, old.kp, self.consensus, self.directory,
                       old.validators, dom.devices, self.timings)
        for tx in self.ledger.transactions():
            hub.index.domain_of(tx)
        self.consensus.subscribers[self.consensus.subscribers.index(old.on_commit)] = hub.on_commit
        self.sim.replace(hub)
        dom.hub = hub
        self.sim.state(hub.name, "recovered")
        return hub

    def run(self, until: Optional[int] = None) -> list[str]:
        return self.sim.run_until_idle(until)
