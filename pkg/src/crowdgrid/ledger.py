"""Simplified permissioned ledger.

Transactions follow an execute-order-validate lifecycle: they are executed
speculatively against a state snapshot to produce read/write sets, ordered
deterministically by (submitter, nonce), validated with a first-wins rule
on write-write conflicts, and applied by every peer independently.  Blocks
are hash-chained; the world state is a deterministic function of the
genesis document and the ordered block sequence.

Stand-ins for heavyweight machinery: a single deterministic ordering
service replaces consensus, and an in-process registrar with Ed25519
keypairs replaces the certificate authority.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey, Ed25519PublicKey)

GENESIS_PREV = "0" * 64

TX_KINDS = ("RegisterPreference", "TradeOffer", "ContractCommit", "SettleIncentive")


class LedgerError(ValueError):
    """Rule violation, bad signature, or structural fault."""


class ReplicationFault(RuntimeError):
    def __init__(self, peer_ids: list[str]):
        super().__init__(f"peers diverged: {peer_ids}")
        self.peer_ids = peer_ids


def canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def merkle_root(tx_ids: list[str]) -> str:
    """Binary hash tree over ordered transaction ids."""
    if not tx_ids:
        return digest(b"")
    level = [bytes.fromhex(x) for x in tx_ids]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [hashlib.sha256(level[i] + level[i + 1]).digest()
                 for i in range(0, len(level), 2)]
    return level[0].hex()


# -- identities ---------------------------------------------------------------

@dataclass(frozen=True)
class Identity:
    id: str
    role: str  # "operator" | "crowdsourcee"
    bus: int | None
    public_key: bytes  # 32-byte Ed25519 verification key
    enrolled_at: int  # registration sequence number


@dataclass
class KeyPair:
    private: Ed25519PrivateKey
    public_bytes: bytes

    @classmethod
    def generate(cls, seed: bytes | None = None) -> "KeyPair":
        priv = (Ed25519PrivateKey.from_private_bytes(seed) if seed
                else Ed25519PrivateKey.generate())
        from cryptography.hazmat.primitives.serialization import (
            Encoding, PublicFormat)
        pub = priv.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return cls(private=priv, public_bytes=pub)


class Registrar:
    """Permissioned enrollment: only identities issued here validate."""

    def __init__(self, bus_ids: set[int]):
        self.bus_ids = set(bus_ids)
        self.identities: dict[str, Identity] = {}
        self._seq = 0

    def register(self, id: str, role: str, bus: int | None,
                 public_key: bytes) -> Identity:
        if role not in ("operator", "crowdsourcee"):
            raise LedgerError(f"unknown role {role!r}")
        if id in self.identities:
            raise LedgerError(f"identity {id!r} already registered")
        if role == "crowdsourcee":
            if bus is None or bus not in self.bus_ids:
                raise LedgerError(f"crowdsourcee {id!r} references unknown bus {bus}")
        if len(public_key) != 32:
            raise LedgerError("verification keys are 32 raw bytes")
        ident = Identity(id=id, role=role, bus=bus, public_key=bytes(public_key),
                         enrolled_at=self._seq)
        self._seq += 1
        self.identities[id] = ident
        return ident

    def get(self, id: str) -> Identity | None:
        return self.identities.get(id)

    def by_bus(self, bus: int) -> Identity | None:
        for ident in sorted(self.identities.values(), key=lambda i: i.enrolled_at):
            if ident.bus == bus:
                return ident
        return None

    def export(self) -> list[dict]:
        return [
            {"id": i.id, "role": i.role, "bus": i.bus,
             "public_key": i.public_key.hex(), "enrolled_at": i.enrolled_at}
            for i in sorted(self.identities.values(), key=lambda i: i.enrolled_at)
        ]

    @classmethod
    def from_export(cls, bus_ids: set[int], records: list[dict]) -> "Registrar":
        reg = cls(bus_ids)
        for rec in records:
            reg.register(rec["id"], rec["role"], rec["bus"],
                         bytes.fromhex(rec["public_key"]))
        return reg


def register_identity(registrar: Registrar, id: str, role: str,
                      bus: int | None, public_key: bytes) -> Identity:
    return registrar.register(id, role, bus, public_key)


# -- transactions -------------------------------------------------------------

@dataclass(frozen=True)
class Transaction:
    kind: str
    payload: dict
    submitter: str
    nonce: int
    signature: bytes

    def signing_bytes(self) -> bytes:
        return canonical({"kind": self.kind, "payload": self.payload,
                          "submitter": self.submitter, "nonce": self.nonce})

    @property
    def tx_id(self) -> str:
        return digest(self.signing_bytes() + self.signature)

    def to_doc(self) -> dict:
        return {"kind": self.kind, "payload": self.payload,
                "submitter": self.submitter, "nonce": self.nonce,
                "signature": self.signature.hex()}

    @classmethod
    def from_doc(cls, doc: dict) -> "Transaction":
        return cls(kind=doc["kind"], payload=doc["payload"],
                   submitter=doc["submitter"], nonce=int(doc["nonce"]),
                   signature=bytes.fromhex(doc["signature"]))


def sign_transaction(key: KeyPair, kind: str, payload: dict, submitter: str,
                     nonce: int) -> Transaction:
    if kind not in TX_KINDS:
        raise LedgerError(f"unknown transaction kind {kind!r}")
    unsigned = Transaction(kind=kind, payload=payload, submitter=submitter,
                           nonce=nonce, signature=b"")
    sig = key.private.sign(unsigned.signing_bytes())
    return replace(unsigned, signature=sig)


# -- world state and execution -------------------------------------------------

@dataclass
class WorldState:
    data: dict[str, object] = field(default_factory=dict)

    def get(self, key: str, default=None):
        return self.data.get(key, default)

    def hash(self) -> str:
        return digest(canonical(self.data))

    def copy(self) -> "WorldState":
        return WorldState(data=json.loads(json.dumps(self.data)))


@dataclass
class ExecutionResult:
    ok: bool
    reason: str | None
    read_set: dict[str, object] = field(default_factory=dict)
    write_set: dict[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class ChainConfig:
    """Genesis parameters shared by every peer."""

    chain_id: str
    operator_id: str
    bus_ids: tuple[int, ...]
    ct_classes: dict[int, str]  # bus -> "CT1"/"CT2"
    initial_balances: dict[str, float]

    def genesis_state(self) -> WorldState:
        state = WorldState()
        for acct, bal in sorted(self.initial_balances.items()):
            state.data[f"account/{acct}"] = bal
        return state

    def to_doc(self) -> dict:
        return {"chain_id": self.chain_id, "operator_id": self.operator_id,
                "bus_ids": list(self.bus_ids),
                "ct_classes": {str(k): v for k, v in sorted(self.ct_classes.items())},
                "initial_balances": dict(sorted(self.initial_balances.items()))}

    @classmethod
    def from_doc(cls, doc: dict) -> "ChainConfig":
        return cls(chain_id=doc["chain_id"], operator_id=doc["operator_id"],
                   bus_ids=tuple(doc["bus_ids"]),
                   ct_classes={int(k): v for k, v in doc["ct_classes"].items()},
                   initial_balances=dict(doc["initial_balances"]))


def _verify_signature(tx: Transaction, registrar: Registrar) -> str | None:
    ident = registrar.get(tx.submitter)
    if ident is None:
        return f"unknown identity {tx.submitter!r}"
    try:
        Ed25519PublicKey.from_public_bytes(ident.public_key).verify(
            tx.signature, tx.signing_bytes())
    except InvalidSignature:
        return "signature verification failed"
    return None


def execute(tx: Transaction, state: WorldState, registrar: Registrar,
            config: ChainConfig) -> ExecutionResult:
    """Speculative execution: returns read/write sets, never mutates state."""
    err = _verify_signature(tx, registrar)
    if err:
        return ExecutionResult(ok=False, reason=err)
    ident = registrar.get(tx.submitter)
    nonce_key = f"nonce/{tx.submitter}"
    last = state.get(nonce_key, -1)
    if tx.nonce <= last:
        return ExecutionResult(ok=False, reason=f"stale nonce {tx.nonce} <= {last}")
    reads = {nonce_key: last}
    writes: dict[str, object] = {nonce_key: tx.nonce}

    if tx.kind == "RegisterPreference":
        if ident.role != "crowdsourcee":
            return ExecutionResult(ok=False, reason="preferences come from crowdsourcees")
        p = tx.payload
        flags = p.get("sell_to_utility")
        if flags is not None and (not isinstance(flags, list) or
                                  any(not isinstance(f, bool) for f in flags)):
            return ExecutionResult(ok=False, reason="sell_to_utility must be booleans")
        writes[f"pref/{ident.bus}/{p.get('day', 0)}"] = {
            "bus": ident.bus, "sell_to_utility": flags,
            "urgency": p.get("urgency"), "t_set": p.get("t_set"),
        }
        return ExecutionResult(ok=True, reason=None, read_set=reads, write_set=writes)

    if tx.kind == "TradeOffer":
        p = tx.payload
        seller = p.get("seller_bus")
        buyer = p.get("buyer_bus")
        ett = p.get("ett_type")
        if ident.role != "crowdsourcee" or ident.bus != seller:
            return ExecutionResult(ok=False, reason="offers are placed by the selling bus")
        if config.ct_classes.get(seller) != "CT2":
            return ExecutionResult(ok=False, reason="only CT2 users trade energy")
        if ett == "B":
            if config.ct_classes.get(buyer) != "CT2":
                return ExecutionResult(
                    ok=False, reason="peer trades occur among CT2 users only")
        elif ett == "A":
            if buyer != "utility":
                return ExecutionResult(ok=False, reason="Type A sells to the utility")
        else:
            return ExecutionResult(ok=False, reason=f"unknown ETT type {ett!r}")
        if not (isinstance(p.get("energy"), (int, float)) and p["energy"] > 0):
            return ExecutionResult(ok=False, reason="trade energy must be positive")
        offer_id = tx.tx_id[:16]
        writes[f"offer/{offer_id}"] = dict(p, status="open", offer_id=offer_id,
                                           seller_id=ident.id)
        return ExecutionResult(ok=True, reason=None, read_set=reads, write_set=writes)

    if tx.kind == "ContractCommit":
        p = tx.payload
        if "offer_id" in p:
            key = f"offer/{p['offer_id']}"
            offer = state.get(key)
            reads[key] = offer
            if offer is None or offer.get("status") != "open":
                return ExecutionResult(ok=False, reason="offer missing or not open")
            is_buyer = (ident.bus == offer.get("buyer_bus"))
            is_operator_utility = (ident.role == "operator"
                                   and offer.get("buyer_bus") == "utility")
            if not (is_buyer or is_operator_utility):
                return ExecutionResult(ok=False, reason="only the buyer commits an offer")
            committed = dict(offer, status="committed", buyer_id=ident.id)
            writes[key] = committed
            writes[f"contract/{p['offer_id']}"] = committed
            return ExecutionResult(ok=True, reason=None, read_set=reads, write_set=writes)
        if "record" in p:
            if ident.role != "operator":
                return ExecutionResult(ok=False, reason="schedule records are operator-only")
            key = p.get("key")
            if not isinstance(key, str) or not key.startswith("contract/"):
                return ExecutionResult(ok=False, reason="record key must live under contract/")
            writes[key] = p["record"]
            return ExecutionResult(ok=True, reason=None, read_set=reads, write_set=writes)
        return ExecutionResult(ok=False, reason="commit needs offer_id or record")

    if tx.kind == "SettleIncentive":
        if ident.role != "operator":
            return ExecutionResult(ok=False, reason="settlement is operator-only")
        p = tx.payload
        entries = p.get("entries", [])
        hour = p.get("hour")
        # payments default to the operator's account; peer-trade
        # reconciliation names the buying crowdsourcee as the payer
        payer = p.get("payer", config.operator_id)
        if registrar.get(payer) is None:
            return ExecutionResult(ok=False, reason=f"unknown payer {payer!r}")
        payer_key = f"account/{payer}"
        payer_bal = state.get(payer_key, 0.0)
        reads[payer_key] = payer_bal
        total = 0.0
        for ent in entries:
            acct = ent.get("account")
            target = registrar.get(acct)
            if target is None:
                return ExecutionResult(ok=False, reason=f"unknown payee {acct!r}")
            if target.bus != ent.get("bus"):
                return ExecutionResult(ok=False, reason="payee bus mismatch")
            amount = float(ent.get("amount", 0.0))
            if amount < 0:
                return ExecutionResult(ok=False, reason="negative settlement amount")
            key = f"account/{acct}"
            bal = writes.get(key, state.get(key, 0.0))
            reads.setdefault(key, state.get(key, 0.0))
            writes[key] = bal + amount
            writes[f"settle/{ent['bus']}/{hour}"] = {
                "bus": ent["bus"], "hour": hour, "account": acct, "payer": payer,
                "p_ni_mwh": ent.get("p_ni_mwh"), "lambda_eq": ent.get("lambda_eq"),
                "lambda_a": ent.get("lambda_a"), "amount": amount,
            }
            total += amount
        writes[payer_key] = writes.get(payer_key, payer_bal) - total
        return ExecutionResult(ok=True, reason=None, read_set=reads, write_set=writes)

    return ExecutionResult(ok=False, reason=f"unknown kind {tx.kind!r}")


# -- blocks and peers ---------------------------------------------------------

@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: str
    tx_root: str
    txs: tuple[Transaction, ...]
    validity: tuple[bool, ...]
    state_hash: str
    timestamp: int

    def header(self) -> dict:
        return {"height": self.height, "prev_hash": self.prev_hash,
                "tx_root": self.tx_root, "state_hash": self.state_hash,
                "timestamp": self.timestamp}

    def header_hash(self) -> str:
        return digest(canonical(self.header()))

    def to_doc(self) -> dict:
        return dict(self.header(), txs=[t.to_doc() for t in self.txs],
                    validity=list(self.validity))

    @classmethod
    def from_doc(cls, doc: dict) -> "Block":
        return cls(height=int(doc["height"]), prev_hash=doc["prev_hash"],
                   tx_root=doc["tx_root"],
                   txs=tuple(Transaction.from_doc(t) for t in doc["txs"]),
                   validity=tuple(bool(v) for v in doc["validity"]),
                   state_hash=doc["state_hash"], timestamp=int(doc["timestamp"]))


def _order(pending: list[Transaction]) -> list[Transaction]:
    return sorted(pending, key=lambda t: (t.submitter, t.nonce, t.tx_id))


def _apply_ordered(txs: list[Transaction], state: WorldState,
                   registrar: Registrar, config: ChainConfig
                   ) -> tuple[list[bool], WorldState]:
    """Validate phase: first-wins on write-write conflicts, winners applied.

    Every transaction is executed against the block-start snapshot, matching
    the parallel execute phase; losers stay recorded but unapplied.
    """
    snapshot = state.copy()
    out = state.copy()
    written: set[str] = set()
    validity = []
    for tx in txs:
        res = execute(tx, snapshot, registrar, config)
        if not res.ok:
            validity.append(False)
            continue
        conflict = (set(res.write_set) - {f"nonce/{tx.submitter}"}) & written
        if conflict:
            validity.append(False)
            continue
        validity.append(True)
        written |= set(res.write_set) - {f"nonce/{tx.submitter}"}
        for k, v in res.write_set.items():
            out.data[k] = v
    return validity, out


class Peer:
    """Validating peer: holds a full chain copy and its world state."""

    def __init__(self, peer_id: str, config: ChainConfig, registrar: Registrar):
        self.peer_id = peer_id
        self.config = config
        self.registrar = registrar
        self.state = config.genesis_state()
        genesis = Block(height=0, prev_hash=GENESIS_PREV, tx_root=merkle_root([]),
                        txs=(), validity=(), state_hash=self.state.hash(),
                        timestamp=0)
        self.chain: list[Block] = [genesis]

    @property
    def height(self) -> int:
        return self.chain[-1].height

    def apply_block(self, block: Block) -> str:
        if block.height != self.height + 1:
            raise LedgerError(f"peer {self.peer_id}: height gap")
        if block.prev_hash != self.chain[-1].header_hash():
            raise LedgerError(f"peer {self.peer_id}: prev-hash mismatch")
        validity, new_state = _apply_ordered(list(block.txs), self.state,
                                             self.registrar, self.config)
        self.state = new_state
        self.chain.append(block)
        return new_state.hash()


def validate_chain(peer: Peer) -> tuple[bool, int | None]:
    """Recompute every hash, signature and state transition from genesis."""
    config, registrar = peer.config, peer.registrar
    state = config.genesis_state()
    prev_header = None
    for block in peer.chain:
        h = block.height
        if h == 0:
            if block.prev_hash != GENESIS_PREV or block.txs:
                return False, 0
            if block.state_hash != state.hash():
                return False, 0
            prev_header = block.header_hash()
            continue
        if block.prev_hash != prev_header:
            return False, h
        if block.tx_root != merkle_root([t.tx_id for t in block.txs]):
            return False, h
        for tx in block.txs:
            if _verify_signature(tx, registrar) is not None:
                return False, h
        validity, state = _apply_ordered(list(block.txs), state, registrar, config)
        if tuple(validity) != block.validity:
            return False, h
        if block.state_hash != state.hash():
            return False, h
        prev_header = block.header_hash()
    return True, None


class Network:
    """Deterministic ordering service plus replicated validating peers."""

    def __init__(self, config: ChainConfig, registrar: Registrar, n_peers: int = 4):
        self.config = config
        self.registrar = registrar
        self.peers = [Peer(f"peer-{i}", config, registrar) for i in range(n_peers)]
        self.pending: list[Transaction] = []
        self._clock = 0

    @property
    def primary(self) -> Peer:
        return self.peers[0]

    def submit(self, tx: Transaction) -> ExecutionResult:
        """Execute phase: speculative run against the primary's state."""
        res = execute(tx, self.primary.state, self.registrar, self.config)
        if res.ok:
            self.pending.append(tx)
        return res

    def order_and_commit(self, timestamp: int | None = None) -> Block:
        if not self.pending:
            raise LedgerError("nothing to commit")
        txs = _order(self.pending)
        self.pending = []
        self._clock += 1
        ts = timestamp if timestamp is not None else self._clock
        validity, new_state = _apply_ordered(txs, self.primary.state,
                                             self.registrar, self.config)
        block = Block(height=self.primary.height + 1,
                      prev_hash=self.primary.chain[-1].header_hash(),
                      tx_root=merkle_root([t.tx_id for t in txs]),
                      txs=tuple(txs), validity=tuple(validity),
                      state_hash=new_state.hash(), timestamp=ts)
        hashes = replicate(block, self.peers)
        unique = set(hashes.values())
        if len(unique) != 1 or block.state_hash not in unique:
            bad = [pid for pid, hv in hashes.items() if hv != block.state_hash]
            raise ReplicationFault(bad)
        return block

    def world_state(self) -> WorldState:
        return self.primary.state

    def export_blocks(self) -> list[dict]:
        return [b.to_doc() for b in self.primary.chain]


def replicate(block: Block, peers: list[Peer]) -> dict[str, str]:
    """All peers apply the block independently; returns their state hashes."""
    return {p.peer_id: p.apply_block(block) for p in peers}
