import hashlib
import io
import random

import pytest
from hypothesis import given, settings, strategies as st

from pbac.identity import IdFactory, Kind, PermType, Permission
from pbac.ledger import (
    Block, DeviceRegistration, DeviceRevocation, DomainRegistration, EmptyDomainError,
    Ledger, PermissionGranted, PolicyModel, Transaction, ZERO_HASH, append_block,
    decode_tx, dump, encode_tx, load, replay, verify_chain,
)


def independent_digest(height, prev, raws):
    # written out longhand to cross-check block_digest
    data = b"PBAC-BLOCK" + height.to_bytes(8, "big") + prev + len(raws).to_bytes(4, "big")
    for raw in raws:
        data += len(raw).to_bytes(4, "big") + raw
    return hashlib.sha256(data).digest()


def make_domain(ids, model=PolicyModel.DAC):
    owner, domain = ids.new(Kind.USER), ids.new(Kind.DOMAIN)
    return owner, domain, Transaction(owner, DomainRegistration(domain, owner, model))


def grant_tx(ids, owner, did):
    return Transaction(owner, PermissionGranted(Permission(ids.new(Kind.USER), did, PermType.READ, "sv")))


def test_genesis_block():
    ids = IdFactory(1)
    _, _, reg = make_domain(ids)
    led = Ledger()
    block = append_block(led, [reg])
    assert block.height == 0 and block.prev_hash == ZERO_HASH
    assert verify_chain(led)


def test_two_blocks_link():
    ids = IdFactory(1)
    owner, domain, reg = make_domain(ids)
    led = Ledger()
    b0 = append_block(led, [reg])
    b1 = append_block(led, [Transaction(owner, DeviceRegistration(domain, ids.new(Kind.DEVICE), owner))])
    assert (b0.height, b1.height) == (0, 1)
    assert b1.prev_hash == b0.hash


def test_empty_block_rejected():
    with pytest.raises(ValueError):
        append_block(Ledger(), [])


def test_thousand_blocks_recompute():
    ids = IdFactory(2)
    owner, domain, reg = make_domain(ids)
    did = ids.new(Kind.DEVICE)
    led = Ledger()
    append_block(led, [reg])
    for _ in range(999):
        append_block(led, [grant_tx(ids, owner, did)])
    assert verify_chain(led)
    prev = ZERO_HASH
    for h, block in enumerate(led.blocks):
        assert block.hash == independent_digest(h, prev, block.raw_txs)
        prev = block.hash


def test_bit_flip_detected():
    ids = IdFactory(3)
    owner, domain, reg = make_domain(ids)
    led = Ledger()
    append_block(led, [reg])
    append_block(led, [grant_tx(ids, owner, ids.new(Kind.DEVICE))])
    raw = bytearray(led.blocks[1].raw_txs[0])
    raw[5] ^= 0x10
    b = led.blocks[1]
    led.blocks[1] = Block(b.height, b.prev_hash, (bytes(raw),), b.hash)
    assert not verify_chain(led)


def test_swapping_blocks_detected():
    ids = IdFactory(4)
    owner, domain, reg = make_domain(ids)
    led = Ledger()
    append_block(led, [reg])
    for _ in range(3):
        append_block(led, [grant_tx(ids, owner, ids.new(Kind.DEVICE))])
    led.blocks[1], led.blocks[2] = led.blocks[2], led.blocks[1]
    assert not verify_chain(led)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=4), min_size=1, max_size=12))
def test_append_never_changes_prior_blocks(sizes):
    ids = IdFactory(5)
    owner, domain, reg = make_domain(ids)
    led = Ledger()
    append_block(led, [reg])
    did = ids.new(Kind.DEVICE)
    for n in sizes:
        before = [(b.height, b.prev_hash, b.raw_txs, b.hash) for b in led.blocks]
        append_block(led, [grant_tx(ids, owner, did) for _ in range(n)])
        assert [(b.height, b.prev_hash, b.raw_txs, b.hash) for b in led.blocks[:-1]] == before
        assert verify_chain(led)


def test_identical_sequences_give_identical_ledgers():
    def build():
        ids = IdFactory(6)
        owner, domain, reg = make_domain(ids)
        led = Ledger()
        append_block(led, [reg])
        for _ in range(20):
            append_block(led, [grant_tx(ids, owner, ids.new(Kind.DEVICE))])
        out = io.StringIO()
        dump(led, out)
        return out.getvalue()

    assert build() == build()


def test_replay_single_registration():
    ids = IdFactory(7)
    _, domain, reg = make_domain(ids)
    led = Ledger()
    append_block(led, [reg])
    assert replay(led, domain) == [reg]


def test_replay_unknown_domain():
    with pytest.raises(EmptyDomainError):
        replay(Ledger(), IdFactory(0).new(Kind.DOMAIN))


def test_replay_filters_interleaved_domains():
    rng = random.Random(8)
    ids = IdFactory(8)
    doms = [make_domain(ids) for _ in range(2)]
    led = Ledger()
    truth = {d[1]: [d[2]] for d in doms}
    device_home = {}
    for d in doms:
        append_block(led, [d[2]])
    for _ in range(200):
        owner, domain, _ = rng.choice(doms)
        if rng.random() < 0.3 or not [k for k, v in device_home.items() if v == domain]:
            did = ids.new(Kind.DEVICE)
            device_home[did] = domain
            tx = Transaction(owner, DeviceRegistration(domain, did, owner))
        else:
            did = rng.choice(sorted(k for k, v in device_home.items() if v == domain))
            tx = grant_tx(ids, owner, did)
        truth[domain].append(tx)
        append_block(led, [tx])
    for owner, domain, _ in doms:
        assert replay(led, domain) == truth[domain]


def test_replay_keeps_history_of_revoked_device():
    ids = IdFactory(9)
    owner, domain, reg = make_domain(ids)
    did = ids.new(Kind.DEVICE)
    g = grant_tx(ids, owner, did)
    led = Ledger()
    for tx in (reg, Transaction(owner, DeviceRegistration(domain, did, owner)), g,
               Transaction(owner, DeviceRevocation(did))):
        append_block(led, [tx])
    assert g in replay(led, domain)


def test_dump_load_roundtrip():
    ids = IdFactory(10)
    owner, domain, reg = make_domain(ids)
    led = Ledger()
    append_block(led, [reg, Transaction(owner, DeviceRegistration(domain, ids.new(Kind.DEVICE), owner, ("a", "b")))])
    append_block(led, [grant_tx(ids, owner, ids.new(Kind.DEVICE))])
    buf = io.StringIO()
    dump(led, buf)
    text = buf.getvalue()
    assert text.splitlines()[0].endswith("digest=sha256")
    again = load(io.StringIO(text))
    assert again.blocks == led.blocks and verify_chain(again)
    with pytest.raises(ValueError):
        load(io.StringIO("not a dump\n"))


def test_transaction_roundtrip():
    ids = IdFactory(11)
    owner, domain, reg = make_domain(ids)
    assert decode_tx(encode_tx(reg)) == reg
