"""HTTP API binding the market, ledger, and scenario together.

Every mutating request becomes exactly one ledger transaction committed in
its own block (single in-process orderer), so reads always reflect prior
accepted writes.  Authentication is by opaque bearer token issued when an
identity is registered; the operator token is created with the runtime.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass, field

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .ledger import KeyPair, LedgerError, Network, sign_transaction
from .market import (IncentiveOutcome, MarketError, OperatorSigner,
                     build_network, record_phase1_contracts,
                     scenario_from_world_state, settle_hour, solve_phase1,
                     solve_phase2, submit_day_ahead)
from .scenario import Scenario


@dataclass
class Runtime:
    """Server-side state: scenario, ledger network, custodial keys, tokens."""

    scenario: Scenario
    network: Network
    keys: dict[str, KeyPair]
    tokens: dict[str, str] = field(default_factory=dict)  # token -> identity id
    equilibrium: object | None = None
    outcomes: dict[int, IncentiveOutcome] = field(default_factory=dict)
    live_scenario: Scenario | None = None
    solver_options: object | None = None

    def __post_init__(self):
        self.operator_token = secrets.token_hex(16)
        self.tokens[self.operator_token] = "operator"
        # all ledger writes and market solves funnel through one committer
        self.commit_lock = threading.Lock()

    def issue_token(self, identity_id: str) -> str:
        token = secrets.token_hex(16)
        self.tokens[token] = identity_id
        return token

    def nonce_for(self, identity_id: str) -> int:
        return self.network.world_state().get(f"nonce/{identity_id}", -1) + 1


def make_runtime(scenario: Scenario, n_peers: int = 4,
                 preload_day_ahead: bool = True) -> Runtime:
    network, keys = build_network(scenario, scenario.seed, n_peers=n_peers)
    if preload_day_ahead:
        submit_day_ahead(scenario, network, keys)
    rt = Runtime(scenario=scenario, network=network, keys=keys)
    for bus in sorted(scenario.crowdsourcees):
        name = f"user{bus}"
        if name in keys:
            rt.issue_token(name)  # tokens retrievable via runtime.tokens in-process
    return rt


def _error(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status,
                         detail={"code": code, "message": message})


class PreferencePayload(BaseModel):
    day: int = 0
    sell_to_utility: list[bool] | None = None
    urgency: float | None = None
    t_set: int | None = None


class TradePayload(BaseModel):
    ett_type: str
    buyer_bus: int | str = "utility"
    window: tuple[int, int]
    energy_mwh: float
    price_per_mwh: float | None = None


class IdentityPayload(BaseModel):
    id: str
    bus: int


def create_app(runtime: Runtime) -> FastAPI:
    app = FastAPI(title="crowdgrid market service")
    rt = runtime

    @app.exception_handler(HTTPException)
    async def on_http_error(request: Request, exc: HTTPException):
        detail = exc.detail if isinstance(exc.detail, dict) else {
            "code": "error", "message": str(exc.detail)}
        return JSONResponse(status_code=exc.status_code, content={"error": detail})

    def caller(request: Request):
        auth = request.headers.get("authorization", "")
        if not auth.lower().startswith("bearer "):
            raise _error(401, "unauthenticated", "bearer token required")
        ident_id = rt.tokens.get(auth.split(" ", 1)[1].strip())
        if ident_id is None:
            raise _error(401, "unauthenticated", "unknown token")
        ident = rt.network.registrar.get(ident_id)
        if ident is None:
            raise _error(401, "unauthenticated", "identity revoked")
        return ident

    def operator_only(ident):
        if ident.role != "operator":
            raise _error(403, "forbidden", "operator-only operation")

    def submit_and_commit(key: KeyPair, kind: str, payload: dict, submitter: str):
        with rt.commit_lock:
            tx = sign_transaction(key, kind, payload, submitter,
                                  rt.nonce_for(submitter))
            res = rt.network.submit(tx)
            if not res.ok:
                reason = res.reason or "rejected"
                if "CT2" in reason or "only" in reason:
                    raise _error(403, "rule-violation", reason)
                raise _error(422, "invalid", reason)
            block = rt.network.order_and_commit()
            return tx, block

    # -- identities ---------------------------------------------------------
    @app.post("/identities", status_code=201)
    def register(payload: IdentityPayload, ident=Depends(caller)):
        operator_only(ident)
        key = KeyPair.generate()
        try:
            created = rt.network.registrar.register(
                payload.id, "crowdsourcee", payload.bus, key.public_bytes)
        except LedgerError as exc:
            if "already registered" in str(exc):
                raise _error(409, "duplicate", str(exc)) from exc
            raise _error(422, "invalid", str(exc)) from exc
        rt.keys[payload.id] = key
        token = rt.issue_token(payload.id)
        return {"id": created.id, "bus": created.bus, "role": created.role,
                "token": token}

    @app.get("/identities")
    def list_identities(ident=Depends(caller)):
        operator_only(ident)
        state = rt.network.world_state()
        out = []
        for rec in rt.network.registrar.export():
            rec = dict(rec)
            rec.pop("public_key")
            rec["balance"] = state.get(f"account/{rec['id']}", 0.0)
            out.append(rec)
        return {"identities": out}

    @app.get("/session")
    def session(ident=Depends(caller)):
        state = rt.network.world_state()
        return {"id": ident.id, "role": ident.role, "bus": ident.bus,
                "balance": state.get(f"account/{ident.id}", 0.0)}

    @app.get("/network")
    def network_info(ident=Depends(caller)):
        sc = rt.scenario
        return {
            "horizon": sc.horizon,
            "buses": [{"id": b.id, "kind": b.kind,
                       "ct_class": sc.crowdsourcees.get(b.id).ct_class
                       if b.id in sc.crowdsourcees else None}
                      for b in sc.feeder.buses],
        }

    # -- crowdsourcee actions -------------------------------------------------
    @app.post("/preferences")
    def post_preferences(payload: PreferencePayload, ident=Depends(caller)):
        if ident.role != "crowdsourcee":
            raise _error(403, "forbidden", "preferences come from crowdsourcees")
        if payload.sell_to_utility is not None and \
                len(payload.sell_to_utility) != rt.scenario.horizon:
            raise _error(422, "invalid", "sell_to_utility length must match horizon")
        tx, block = submit_and_commit(
            rt.keys[ident.id], "RegisterPreference",
            {"day": payload.day, "sell_to_utility": payload.sell_to_utility,
             "urgency": payload.urgency, "t_set": payload.t_set}, ident.id)
        return {"tx_id": tx.tx_id, "height": block.height}

    @app.post("/trades", status_code=201)
    def post_trade(payload: TradePayload, ident=Depends(caller)):
        if ident.role != "crowdsourcee":
            raise _error(403, "forbidden", "trades come from crowdsourcees")
        lo, hi = payload.window
        if not (0 <= lo <= hi < rt.scenario.horizon):
            raise _error(422, "invalid", "trade window outside the horizon")
        tx, block = submit_and_commit(
            rt.keys[ident.id], "TradeOffer",
            {"seller_bus": ident.bus, "buyer_bus": payload.buyer_bus,
             "ett_type": payload.ett_type, "window": [lo, hi],
             "energy": payload.energy_mwh, "price": payload.price_per_mwh},
            ident.id)
        return {"offer_id": tx.tx_id[:16], "height": block.height}

    @app.get("/trades")
    def list_trades(ident=Depends(caller)):
        state = rt.network.world_state()
        offers = [dict(v) for k, v in sorted(state.data.items())
                  if k.startswith("offer/")]
        return {"offers": offers}

    @app.post("/trades/{offer_id}/accept")
    def accept_trade(offer_id: str, ident=Depends(caller)):
        offer = rt.network.world_state().get(f"offer/{offer_id}")
        if offer is None:
            raise _error(404, "not-found", "no such offer")
        if offer.get("status") != "open":
            raise _error(409, "conflict", "offer is not open")
        if ident.role != "operator" and ident.bus != offer.get("buyer_bus"):
            raise _error(403, "forbidden", "only the buyer can accept")
        tx, block = submit_and_commit(rt.keys[ident.id], "ContractCommit",
                                      {"offer_id": offer_id}, ident.id)
        return {"contract_id": offer_id, "height": block.height}

    # -- market operations ----------------------------------------------------
    @app.post("/market/phase1")
    def market_phase1(ident=Depends(caller)):
        operator_only(ident)
        with rt.commit_lock:
            live = scenario_from_world_state(rt.scenario, rt.network)
            try:
                eq = solve_phase1(live, options=rt.solver_options)
            except MarketError as exc:
                raise _error(409, "solve-failed", str(exc)) from exc
            signer = OperatorSigner(rt.network, rt.keys["operator"])
            record_phase1_contracts(signer, live, eq)
            block = rt.network.order_and_commit()
            rt.equilibrium = eq
            rt.live_scenario = live
            rt.outcomes.clear()
        return {"objective": eq.objective, "height": block.height,
                "max_relaxation_residual": eq.max_relaxation_residual}

    @app.post("/market/phase2")
    def market_phase2(hour: int = Query(...), ident=Depends(caller)):
        operator_only(ident)
        if rt.equilibrium is None:
            raise _error(409, "phase-order", "run phase 1 before phase 2")
        if not 0 <= hour < rt.scenario.horizon:
            raise _error(422, "invalid", f"hour {hour} outside 0..{rt.scenario.horizon - 1}")
        with rt.commit_lock:
            live = rt.live_scenario or rt.scenario
            try:
                outcome = solve_phase2(live, rt.equilibrium, hour,
                                       options=rt.solver_options)
            except MarketError as exc:
                raise _error(409, "solve-failed", str(exc)) from exc
            signer = OperatorSigner(rt.network, rt.keys["operator"])
            settle_hour(signer, rt.network, outcome)
            block = rt.network.order_and_commit()
            rt.outcomes[hour] = outcome
        return {"hour": hour, "total_paid": outcome.total_paid,
                "b_total": outcome.b_total, "height": block.height}

    @app.get("/market/dlmp")
    def market_dlmp(bus: int | None = None, hour: int | None = None,
                    ident=Depends(caller)):
        if rt.equilibrium is None:
            raise _error(409, "phase-order", "no day-ahead equilibrium yet")
        dlmp = rt.equilibrium.dlmp
        buses = [bus] if bus is not None else sorted(dlmp)
        hours = [hour] if hour is not None else list(range(rt.scenario.horizon))
        if bus is not None and bus not in dlmp:
            raise _error(404, "not-found", f"no such bus {bus}")
        if hour is not None and not 0 <= hour < rt.scenario.horizon:
            raise _error(422, "invalid", "hour outside horizon")
        return {"values": [{"bus": b, "hour": t, "dlmp": float(dlmp[b][t])}
                           for b in buses for t in hours]}

    @app.get("/market/incentives")
    def market_incentives(bus: int | None = None, ident=Depends(caller)):
        out = []
        for hour in sorted(rt.outcomes):
            for b, s in sorted(rt.outcomes[hour].sellers.items()):
                if bus is None or b == bus:
                    out.append({"bus": b, "hour": hour, "p_ni_mwh": s.p_ni,
                                "lambda_eq": s.lambda_eq, "lambda_a": s.lambda_a,
                                "payment": s.payment,
                                "final_price": s.final_price})
        return {"values": out}

    # -- ledger reads ---------------------------------------------------------
    @app.get("/ledger/blocks")
    def ledger_blocks(from_height: int = Query(0, alias="from"),
                      ident=Depends(caller)):
        blocks = [b.to_doc() for b in rt.network.primary.chain
                  if b.height >= from_height]
        return {"blocks": blocks, "height": rt.network.primary.height}

    @app.get("/ledger/state/{key:path}")
    def ledger_state(key: str, ident=Depends(caller)):
        value = rt.network.world_state().get(key)
        if value is None:
            raise _error(404, "not-found", f"no state under {key!r}")
        return {"key": key, "value": value}

    @app.get("/ledger/verify")
    def ledger_verify(ident=Depends(caller)):
        from .ledger import validate_chain
        ok, bad = validate_chain(rt.network.primary)
        return {"ok": ok, "first_bad_height": bad,
                "height": rt.network.primary.height,
                "state_hash": rt.network.primary.state.hash()}

    @app.get("/accounts/{account_id}")
    def account(account_id: str, ident=Depends(caller)):
        if rt.network.registrar.get(account_id) is None:
            raise _error(404, "not-found", "unknown account")
        bal = rt.network.world_state().get(f"account/{account_id}", 0.0)
        return {"id": account_id, "balance": bal}

    return app
