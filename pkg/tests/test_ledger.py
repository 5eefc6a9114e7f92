import dataclasses

import numpy as np
import pytest

from crowdgrid.ledger import (ChainConfig, KeyPair, LedgerError, Network,
                              Registrar, ReplicationFault, Transaction,
                              execute, merkle_root, register_identity,
                              sign_transaction, validate_chain)


def make_config(n_bus: int = 8) -> ChainConfig:
    ct = {b: ("CT2" if b in (2, 3, 5, 7) else "CT1") for b in range(2, n_bus + 1)}
    ct[1] = "CT1"
    return ChainConfig(chain_id="test-chain", operator_id="operator",
                       bus_ids=tuple(range(1, n_bus + 1)), ct_classes=ct,
                       initial_balances={"operator": 1000.0})


def seeded_key(tag: str) -> KeyPair:
    return KeyPair.generate(seed=tag.encode().ljust(32, b"\0"))


@pytest.fixture
def net():
    config = make_config()
    reg = Registrar(set(config.bus_ids))
    keys = {"operator": seeded_key("op")}
    reg.register("operator", "operator", None, keys["operator"].public_bytes)
    for bus in (2, 3, 5, 7, 4):
        name = f"user{bus}"
        keys[name] = seeded_key(name)
        reg.register(name, "crowdsourcee", bus, keys[name].public_bytes)
    network = Network(config, reg, n_peers=4)
    return network, keys


def test_register_identity_rules():
    config = make_config()
    reg = Registrar(set(config.bus_ids))
    k = seeded_key("alice")
    ident = register_identity(reg, "alice", "crowdsourcee", 2, k.public_bytes)
    assert ident.role == "crowdsourcee" and ident.bus == 2
    with pytest.raises(LedgerError, match="already registered"):
        register_identity(reg, "alice", "crowdsourcee", 3, k.public_bytes)
    with pytest.raises(LedgerError, match="unknown bus"):
        register_identity(reg, "bob", "crowdsourcee", 999, seeded_key("bob").public_bytes)


def test_execute_is_pure_and_returns_write_set(net):
    network, keys = net
    tx = sign_transaction(keys["user2"], "RegisterPreference",
                          {"day": 0, "sell_to_utility": [True] * 24}, "user2", 0)
    before = network.primary.state.hash()
    res = execute(tx, network.primary.state, network.registrar, network.config)
    assert res.ok
    assert "pref/2/0" in res.write_set
    assert network.primary.state.hash() == before  # no mutation


def test_execute_rejects_type_b_from_ct1(net):
    network, keys = net
    tx = sign_transaction(keys["user4"], "TradeOffer",
                          {"seller_bus": 4, "buyer_bus": 5, "ett_type": "B",
                           "window": [9, 13], "energy": 0.1}, "user4", 0)
    res = execute(tx, network.primary.state, network.registrar, network.config)
    assert not res.ok
    assert "CT2" in res.reason


def test_execute_rejects_type_b_to_ct1_buyer(net):
    network, keys = net
    tx = sign_transaction(keys["user2"], "TradeOffer",
                          {"seller_bus": 2, "buyer_bus": 4, "ett_type": "B",
                           "window": [9, 13], "energy": 0.1}, "user2", 0)
    res = execute(tx, network.primary.state, network.registrar, network.config)
    assert not res.ok


def test_execute_rejects_settlement_from_non_operator(net):
    network, keys = net
    tx = sign_transaction(keys["user2"], "SettleIncentive",
                          {"hour": 6, "entries": []}, "user2", 0)
    res = execute(tx, network.primary.state, network.registrar, network.config)
    assert not res.ok
    assert "operator" in res.reason


def test_execute_rejects_bad_signature_and_stale_nonce(net):
    network, keys = net
    good = sign_transaction(keys["user2"], "RegisterPreference", {"day": 0}, "user2", 0)
    forged = dataclasses.replace(good, payload={"day": 1})
    res = execute(forged, network.primary.state, network.registrar, network.config)
    assert not res.ok and "signature" in res.reason

    network.submit(good)
    network.order_and_commit()
    stale = sign_transaction(keys["user2"], "RegisterPreference", {"day": 2}, "user2", 0)
    res = execute(stale, network.primary.state, network.registrar, network.config)
    assert not res.ok and "nonce" in res.reason


def test_order_and_commit_applies_both(net):
    network, keys = net
    network.submit(sign_transaction(keys["user2"], "RegisterPreference",
                                    {"day": 0}, "user2", 0))
    network.submit(sign_transaction(keys["user3"], "RegisterPreference",
                                    {"day": 0}, "user3", 0))
    block = network.order_and_commit()
    assert len(block.txs) == 2
    assert block.validity == (True, True)
    assert network.world_state().get("pref/2/0") is not None
    assert network.world_state().get("pref/3/0") is not None


def test_order_and_commit_first_wins_on_conflict(net):
    network, keys = net
    # same user, same preference key, two submissions in one block
    a = sign_transaction(keys["user2"], "RegisterPreference",
                         {"day": 0, "urgency": 0.1}, "user2", 0)
    b = sign_transaction(keys["user2"], "RegisterPreference",
                         {"day": 0, "urgency": 0.9}, "user2", 1)
    network.submit(a)
    network.submit(b)
    block = network.order_and_commit()
    assert block.validity == (True, False)  # ordered by nonce, first wins
    assert network.world_state().get("pref/2/0")["urgency"] == 0.1


def test_order_and_commit_empty_errors(net):
    network, _ = net
    with pytest.raises(LedgerError, match="nothing to commit"):
        network.order_and_commit()


def test_offer_accept_flow_and_settlement_conservation(net):
    network, keys = net
    offer = sign_transaction(keys["user5"], "TradeOffer",
                             {"seller_bus": 5, "buyer_bus": 3, "ett_type": "B",
                              "window": [9, 13], "energy": 0.119, "price": 40.0},
                             "user5", 0)
    network.submit(offer)
    block = network.order_and_commit()
    offer_id = offer.tx_id[:16]
    assert network.world_state().get(f"offer/{offer_id}")["status"] == "open"

    accept = sign_transaction(keys["user3"], "ContractCommit",
                              {"offer_id": offer_id}, "user3", 0)
    network.submit(accept)
    network.order_and_commit()
    assert network.world_state().get(f"contract/{offer_id}")["status"] == "committed"

    settle = sign_transaction(
        keys["operator"], "SettleIncentive",
        {"hour": 10, "entries": [
            {"bus": 5, "account": "user5", "amount": 1.25,
             "p_ni_mwh": 0.05, "lambda_eq": 30.0, "lambda_a": -5.0},
            {"bus": 2, "account": "user2", "amount": 0.75,
             "p_ni_mwh": 0.02, "lambda_eq": 30.0, "lambda_a": 7.5},
        ]}, "operator", 0)
    network.submit(settle)
    network.order_and_commit()
    state = network.world_state()
    assert state.get("account/user5") == pytest.approx(1.25)
    assert state.get("account/user2") == pytest.approx(0.75)
    assert state.get("account/operator") == pytest.approx(1000.0 - 2.0)
    total = sum(v for k, v in state.data.items() if k.startswith("account/"))
    assert total == pytest.approx(1000.0)  # settlement conserves balances


def _grow_chain(network, keys, blocks=10):
    nonces = {name: 0 for name in keys}
    rng = np.random.default_rng(42)
    users = [n for n in keys if n.startswith("user")]
    for _ in range(blocks):
        for _ in range(int(rng.integers(1, 4))):
            name = users[int(rng.integers(0, len(users)))]
            tx = sign_transaction(keys[name], "RegisterPreference",
                                  {"day": int(rng.integers(0, 365))},
                                  name, nonces[name])
            nonces[name] += 1
            network.submit(tx)
        network.order_and_commit()


def test_validate_chain_clean(net):
    network, keys = net
    _grow_chain(network, keys, 10)
    ok, bad = validate_chain(network.primary)
    assert ok and bad is None


def test_validate_chain_detects_payload_tamper(net):
    network, keys = net
    _grow_chain(network, keys, 10)
    peer = network.primary
    peer.chain[4].txs[0].payload["day"] = 999  # flip a recorded field
    ok, bad = validate_chain(peer)
    assert not ok and bad == 4


def test_validate_chain_detects_foreign_key(net):
    network, keys = net
    _grow_chain(network, keys, 6)
    peer = network.primary
    rogue = KeyPair.generate(seed=b"r" * 32)
    victim = peer.chain[3].txs[0]
    resigned = sign_transaction(
        KeyPair(private=rogue.private, public_bytes=rogue.public_bytes),
        victim.kind, victim.payload, victim.submitter, victim.nonce)
    txs = (resigned,) + peer.chain[3].txs[1:]
    peer.chain[3] = dataclasses.replace(peer.chain[3], txs=txs)
    ok, bad = validate_chain(peer)
    assert not ok and bad == 3


def test_replication_equal_hashes(net):
    network, keys = net
    _grow_chain(network, keys, 5)
    hashes = {p.peer_id: p.state.hash() for p in network.peers}
    assert len(set(hashes.values())) == 1
    heights = {p.height for p in network.peers}
    assert heights == {5}


def test_replication_fault_names_tampered_peer(net):
    network, keys = net
    network.peers[2].state.data["account/operator"] = 1.0  # tampered genesis state
    network.submit(sign_transaction(keys["operator"], "SettleIncentive",
                                    {"hour": 0, "entries": [
                                        {"bus": 2, "account": "user2", "amount": 5.0}
                                    ]}, "operator", 0))
    with pytest.raises(ReplicationFault) as err:
        network.order_and_commit()
    assert err.value.peer_ids == ["peer-2"]


def test_determinism_across_networks():
    def run():
        config = make_config()
        reg = Registrar(set(config.bus_ids))
        keys = {"operator": seeded_key("op")}
        reg.register("operator", "operator", None, keys["operator"].public_bytes)
        for bus in (2, 3):
            keys[f"user{bus}"] = seeded_key(f"user{bus}")
            reg.register(f"user{bus}", "crowdsourcee", bus, keys[f"user{bus}"].public_bytes)
        network = Network(config, reg, n_peers=2)
        _grow_chain(network, keys, 8)
        return [b.header_hash() for b in network.primary.chain]

    assert run() == run()


def test_merkle_root_changes_with_content():
    a = merkle_root(["ab" * 32, "cd" * 32])
    b = merkle_root(["ab" * 32, "ce" * 32])
    assert a != b
    assert merkle_root([]) != merkle_root(["ab" * 32])
