import logging
import random

import pytest

from pbac.actors import (
    Connect, Deployment, DeviceActor, InstallKey, QuorumError, Timings,
    hub_recover, quorum_size,
)
from pbac.identity import Kind, PermType, Permission, SessionKey, sign, sign_token, canonical_encode
from pbac.ledger import (
    EndorsedToken, PermissionGranted, PolicyModel, Transaction, TrustUser,
)
from pbac.netsim import Actor, NetConfig, Partition, Simulator, parse_trace
from pbac.workload import gen_policy_history


class Setup:
    """A DAC domain with one device and one granted user."""

    def __init__(self, seed=3, trusted=False, dissent=0, ul=None, net=None):
        self.dep = Deployment(seed=seed, net=net)
        self.dom = self.dep.add_domain(PolicyModel.DAC)
        self.dev = self.dep.add_device(self.dom, ("sv",))
        self.uid = self.dep.new_user()
        self.per = Permission(self.uid, self.dev.did, PermType.READ, "sv", None, ul)
        self.dep.submit(self.dom, PermissionGranted(self.per))
        if trusted:
            self.dep.submit(self.dom, TrustUser(self.dom.domain, self.uid))
        for v in self.dep.validators[:dissent]:
            v.diverged = True
        self.client = self.dep.add_client(self.dom, self.uid, "cli", intranet=False)
        self.req = self.per.request

    def access(self, gap=1_000):
        at = self.dep.sim.now + gap
        self.dep.request(self.client, self.req, at=at, tag=at)
        self.dep.run()
        return self.dep.outcomes[-1]

    def rows(self, since=0):
        return [r for r in parse_trace(self.dep.sim.trace) if r[0] >= since]

    def endorsed_tokens(self):
        return [tx.body for tx in self.dep.ledger.transactions() if isinstance(tx.body, EndorsedToken)]


def test_quorum_size():
    assert [quorum_size(n) for n in (1, 2, 3, 4, 5, 7)] == [1, 2, 2, 3, 3, 4]


def test_first_access_full_path_then_cached_reentry():
    s = Setup()
    first = s.access()
    assert first.status == "connected"
    assert s.req in s.client.cache
    t = s.dep.sim.now
    second = s.access()
    assert second.status == "connected"
    later = [r for r in s.rows(t) if r[1] == "send"]
    assert later and all(r[2] in ("cli", "dev0.0") and r[3] in ("cli", "dev0.0") for r in later)


def test_reboot_forces_hub_fallback():
    s = Setup()
    s.access()
    s.dev.reboot()
    t = s.dep.sim.now
    out = s.access()
    assert out.status == "connected"
    rejected = [r for r in s.rows(t) if r[4] == "ConnectResult" and "no-session-key" in r[5]]
    assert rejected
    assert any(r[1] == "recv" and r[4] == "AccessRequest" for r in s.rows(t))


def test_shortcut_token_reaches_client_before_any_endorsement():
    s = Setup(trusted=True)
    assert s.access().status == "connected"
    rows = s.rows()
    token_recv = min(r[0] for r in rows if r[1] == "recv" and r[4] == "TokenGrant")
    token_send = min(r[0] for r in rows if r[1] == "send" and r[4] == "TokenGrant")
    first_endorsement = min(r[0] for r in rows if r[1] == "recv" and r[4] == "Endorsement" and r[3] == "hub0")
    first_endorse_req = min(r[0] for r in rows if r[1] == "send" and r[4] == "EndorseRequest")
    assert token_send == first_endorse_req
    assert token_recv < first_endorsement
    assert len(s.endorsed_tokens()) == 1


def test_full_path_token_only_after_quorum():
    s = Setup()
    s.access()
    rows = s.rows()
    first_endorsement = min(r[0] for r in rows if r[1] == "recv" and r[4] == "Endorsement" and r[3] == "hub0")
    token_send = min(r[0] for r in rows if r[1] == "send" and r[4] == "TokenGrant")
    key_send = min(r[0] for r in rows if r[1] == "send" and r[4] == "InstallKey")
    assert token_send >= first_endorsement and key_send >= first_endorsement
    grant = next(r for r in rows if r[1] == "send" and r[4] == "TokenGrant")
    assert "sigs=4" in grant[5]  # hub plus three validators


@pytest.mark.parametrize("dissent", [0, 1])
def test_endorsement_commits_with_quorum(dissent):
    s = Setup(dissent=dissent)
    assert s.access().status == "connected"
    (endorsed,) = s.endorsed_tokens()
    validators = [x for x in endorsed.token.signers if x.kind is Kind.VALIDATOR]
    assert len(set(validators)) >= 3
    dissents = [r for r in s.rows() if r[1] == "state" and r[4] == "dissent"]
    assert len(dissents) == dissent


def test_two_dissenters_block_full_path():
    s = Setup(dissent=2)
    out = s.access()
    assert out.status == "rejected"
    assert s.endorsed_tokens() == []
    assert any(r[4] == "endorse-timeout" for r in s.rows())
    assert not any(r[4] == "InstallKey" for r in s.rows())


def test_failed_shortcut_endorsement_revokes_key_within_sweep():
    s = Setup(trusted=True, dissent=2)
    out = s.access()
    assert out.status == "connected"
    rows = s.rows()
    granted = min(r[0] for r in rows if r[4] == "shortcut-grant")
    revoke = min(r[0] for r in rows if r[1] == "send" and r[4] == "RevokeKey")
    assert revoke - granted <= s.dep.timings.sweep_us
    assert s.dev.keys == {}
    assert any(r[1] == "recv" and r[4] == "SessionTerminated" for r in rows)
    assert s.req not in s.client.cache


def test_decisions_match_between_modes():
    rng = random.Random(9)
    results = {}
    for trusted in (False, True):
        dep = Deployment(seed=4)
        dom = dep.add_domain(PolicyModel.DAC)
        devs = [dep.add_device(dom, ("a", "b")) for _ in range(3)]
        users = [dep.new_user() for _ in range(4)]
        rng.seed(9)
        for _ in range(8):
            dep.submit(dom, PermissionGranted(Permission(rng.choice(users), rng.choice(devs).did,
                                                         rng.choice(list(PermType)), rng.choice("ab"))))
        if trusted:
            for u in users:
                dep.submit(dom, TrustUser(dom.domain, u))
        for k in range(30):
            u, d = rng.choice(users), rng.choice(devs)
            client = dep.add_client(dom, u, f"c{k}")
            dep.request(client, (u, d.did, rng.choice(list(PermType)), rng.choice("ab")), at=(k + 1) * 10_000_000, tag=k)
        dep.run()
        results[trusted] = {o.tag: o.status for o in dep.outcomes}
    assert results[False] == results[True]
    assert "connected" in results[True].values() and "rejected" in results[True].values()


def device_sim(ul=None):
    sim = Simulator(NetConfig(), 0)
    dep = Deployment(seed=1)
    dom = dep.add_domain()
    hub = dom.hub
    dev = DeviceActor("dev", "lan", dep.ids.new(Kind.DEVICE), hub.state.hid, dep.directory, Timings())
    sim.add(dev)

    class Sink(Actor):
        def __init__(self):
            super().__init__("cli", "wan")
            self.results = []

        def receive(self, src, msg):
            self.results.append(msg)

    sink = sim.add(Sink())
    per = Permission(dep.new_user(), dev.did, PermType.READ, "sv", None, ul)
    token = sign_token(per, hub.state.hid, hub.kp)
    return sim, dev, sink, per, token


def test_device_accepts_with_live_key():
    sim, dev, sink, per, token = device_sim()
    dev.keys[b"k" * 16] = SessionKey(per, b"k" * 16)
    dev.receive("cli", Connect(token))
    sim.run_until_idle()
    assert sink.results[-1].ok


def test_device_rejects_after_key_revoked():
    sim, dev, sink, per, token = device_sim()
    dev.receive("hub", InstallKey(SessionKey(per, b"k" * 16)))
    dev.keys.clear()
    dev.receive("cli", Connect(token))
    sim.run_until_idle()
    assert not sink.results[-1].ok


def test_device_usage_limit_counter():
    sim, dev, sink, per, token = device_sim(ul=1)
    dev.keys[b"k" * 16] = SessionKey(per, b"k" * 16)
    dev.receive("cli", Connect(token))
    dev.receive("cli", Connect(token))
    sim.run_until_idle()
    assert [r.ok for r in sink.results] == [True, False]
    assert sink.results[1].reason == "exhausted"


def test_device_rejects_forged_token():
    sim, dev, sink, per, token = device_sim()
    dev.keys[b"k" * 16] = SessionKey(per, b"k" * 16)
    forged = type(token)(per, ((token.signatures[0][0], b"\x00" * 64),))
    dev.receive("cli", Connect(forged))
    sim.run_until_idle()
    assert sink.results[-1].reason == "bad-signature"


def test_revoke_then_request_rejected():
    s = Setup()
    s.access()
    assert s.dom.hub.revoke_permission(s.per)
    s.dep.run()
    assert s.req not in s.dom.hub.sdp.acl
    assert s.dev.keys == {}
    fresh = s.dep.add_client(s.dom, s.uid, "cli2")
    s.dep.request(fresh, s.req, at=s.dep.sim.now + 1_000)
    s.dep.run()
    assert s.dep.outcomes[-1].status == "rejected"


def test_revoke_with_device_offline():
    s = Setup()
    s.access()
    t0 = s.dep.sim.now + 1_000
    heal = t0 + 30_000_000
    s.dep.sim.add_partition(Partition(t0, heal, links=frozenset(), pairs=frozenset({("hub0", "dev0.0")})))
    s.dep.sim.now = t0  # idle simulator: jump the clock to the outage start
    assert s.dom.hub.revoke_permission(s.per)
    fresh = s.dep.add_client(s.dom, s.uid, "cli2")
    s.dep.request(fresh, s.req, at=t0 + 1_000_000)
    s.dep.run()
    rows = s.rows(t0)
    denied = next(o for o in s.dep.outcomes if o.start == t0 + 1_000_000)
    assert denied.status == "rejected" and denied.end < heal
    purge = min(r[0] for r in rows if r[1] == "recv" and r[4] == "RevokeKey")
    assert purge >= heal
    committed = min(r[0] for r in rows if r[4] == "revoke-committed")
    assert committed >= purge
    assert s.dev.keys == {}


def test_revoke_unknown_grant_warns(caplog):
    s = Setup()
    other = Permission(s.dep.new_user(), s.dev.did, PermType.WRITE)
    with caplog.at_level(logging.WARNING):
        assert not s.dom.hub.revoke_permission(other)
    assert "unknown grant" in caplog.text


def test_consensus_refuses_thin_endorsement():
    s = Setup()
    hub = s.dom.hub
    token = sign_token(s.per, hub.state.hid, hub.kp)
    v = s.dep.validators[0]
    token = token.with_signature(v.vid, sign(v.kp, canonical_encode(s.per)))
    with pytest.raises(QuorumError):
        s.dep.consensus.commit([Transaction(v.vid, EndorsedToken(token))])


@pytest.mark.parametrize("model", [PolicyModel.DAC, PolicyModel.RBAC, PolicyModel.ABAC])
def test_crash_and_recover_matches_twin(model):
    dep = Deployment(seed=12)
    dom = dep.add_domain(model)
    _, txs = gen_policy_history(model, 300, seed=12, domain=dom.domain, owner=dom.owner)
    for tx in txs[:200]:
        dep.consensus.commit([tx])
    dep.crash_hub(dom)
    for tx in txs[200:]:
        dep.consensus.commit([tx])
    twin = dep.validators[0].sdps[dom.domain]
    recovered = dep.recover_hub(dom)
    assert recovered.sdp.canonical() == twin.canonical()
    # the recovered hub keeps tracking new commits
    extra = gen_policy_history(model, 50, seed=13, domain=dom.domain, owner=dom.owner)[1]
    for tx in extra:
        dep.consensus.commit([tx])
    assert recovered.sdp.canonical() == dep.validators[1].sdps[dom.domain].canonical()


def test_recover_empty_domain():
    dep = Deployment(seed=2)
    dom = dep.add_domain(PolicyModel.RBAC)
    state = hub_recover(dep.ledger, dom.domain, dom.hub.state.hid)
    assert not state.sdp.devices and not state.sdp.roles and state.pending == {}


def test_two_recovered_hubs_agree():
    dep = Deployment(seed=5)
    dom = dep.add_domain(PolicyModel.RBAC)
    for tx in gen_policy_history(PolicyModel.RBAC, 200, seed=5, domain=dom.domain, owner=dom.owner)[1]:
        dep.consensus.commit([tx])
    a = hub_recover(dep.ledger, dom.domain, dom.hub.state.hid)
    b = hub_recover(dep.ledger, dom.domain, dom.hub.state.hid)
    assert a.sdp.canonical() == b.sdp.canonical() == dom.hub.sdp.canonical()


def test_policy_change_terminates_live_sessions():
    from pbac.ledger import AssignRolePermission, AssignRoleUser, NewRole, RemoveRoleUser
    dep = Deployment(seed=6)
    dom = dep.add_domain(PolicyModel.RBAC)
    dev = dep.add_device(dom, ("sv",))
    uid = dep.new_user()
    rid = dep.ids.new(Kind.ROLE)
    for body in (NewRole(dom.domain, rid, b"r"), AssignRoleUser(rid, uid),
                 AssignRolePermission(rid, dev.did, PermType.READ, "sv")):
        dep.submit(dom, body)
    client = dep.add_client(dom, uid, "c")
    dep.request(client, (uid, dev.did, PermType.READ, "sv"), at=1000)
    dep.run()
    assert dep.outcomes[-1].status == "connected" and dev.keys
    dep.submit(dom, RemoveRoleUser(rid, uid))
    dep.run()
    assert dev.keys == {}
    assert any(r[4] == "session-terminated" for r in parse_trace(dep.sim.trace))


def test_spent_usage_limit_survives_unrelated_revocation():
    from pbac.ledger import PermissionRevoked
    s = Setup(ul=1)
    assert s.access().status == "connected"
    assert s.dev.keys
    other = Permission(s.dep.new_user(), s.dev.did, PermType.WRITE, "sv")
    s.dep.submit(s.dom, PermissionGranted(other))
    s.dep.submit(s.dom, PermissionRevoked(other))
    s.dep.run()
    assert s.dev.keys
    assert not any(r[4] == "session-revoked" for r in s.rows())
