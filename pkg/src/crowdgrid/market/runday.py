"""Blockchain-assisted daily operation.

Phase one: crowdsourcee preferences and peer-trade requests are read back
from the ledger world state, the day-ahead program is solved, and schedule
contracts are recorded in one block.  Phase two: for each hour, willing
CT2 sellers are selected, hour-ahead forecasts pulled, the incentive
program solved, payments settled on-chain (one block per hour), and an
end-of-day reconciliation summary emitted.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from ..ders import CT2, PreferenceSet, TradeRequest
from ..ledger import (ChainConfig, KeyPair, Network, Registrar,
                      sign_transaction)
from ..scenario import Scenario, scenario_hash
from .build import MarketError
from .phases import (Equilibrium, IncentiveOutcome, hourly_forecasts,
                     solve_phase1, solve_phase2)

PAY_EPS = 1e-9


@dataclass
class DayReport:
    scenario_name: str
    seed: int
    scenario_hash: str
    equilibrium: Equilibrium
    outcomes: list[IncentiveOutcome]
    failures: list[tuple[int, str]]
    chain_id: str
    final_height: int
    final_state_hash: str
    seller_totals: dict[int, float] = field(default_factory=dict)  # $ per bus
    peer_settlements: list[dict] = field(default_factory=list)

    @property
    def p_g_phase2(self) -> np.ndarray:
        out = np.zeros(len(self.outcomes))
        for k, oc in enumerate(self.outcomes):
            out[k] = sum(oc.p_g.values())
        return out

    def reconciliation(self) -> dict:
        """End-of-day settlement summary per selling bus."""
        return {
            "total_incentives": float(sum(self.seller_totals.values())),
            "per_bus": {int(b): float(v) for b, v in sorted(self.seller_totals.items())},
            "peer_trades": self.peer_settlements,
            "failed_hours": [t for t, _ in self.failures],
        }


def _det_key(chain_id: str, name: str) -> KeyPair:
    seed = hashlib.sha256(f"{chain_id}/{name}".encode()).digest()
    return KeyPair.generate(seed=seed)


def build_network(scenario: Scenario, seed: int, n_peers: int = 4
                  ) -> tuple[Network, dict[str, KeyPair]]:
    """Fresh ledger network with the operator and one identity per bus."""
    chain_id = f"{scenario.name}-{seed}"
    config = ChainConfig(
        chain_id=chain_id,
        operator_id="operator",
        bus_ids=tuple(b.id for b in scenario.feeder.buses),
        ct_classes={b: c.ct_class for b, c in sorted(scenario.crowdsourcees.items())},
        initial_balances={"operator": 1_000_000.0},
    )
    registrar = Registrar(set(config.bus_ids))
    keys = {"operator": _det_key(chain_id, "operator")}
    registrar.register("operator", "operator", None, keys["operator"].public_bytes)
    for bus in sorted(scenario.crowdsourcees):
        if bus == scenario.feeder.root:
            continue
        name = f"user{bus}"
        keys[name] = _det_key(chain_id, name)
        registrar.register(name, "crowdsourcee", bus, keys[name].public_bytes)
    return Network(config, registrar, n_peers=n_peers), keys


def submit_day_ahead(scenario: Scenario, network: Network,
                     keys: dict[str, KeyPair]) -> None:
    """Publish every crowdsourcee's preferences and peer-trade offers."""
    nonces: dict[str, int] = {}

    def next_nonce(name):
        nonces[name] = nonces.get(name, -1) + 1
        return nonces[name]

    for bus in sorted(scenario.crowdsourcees):
        name = f"user{bus}"
        if name not in keys:
            continue
        pref = scenario.crowdsourcees[bus].preferences
        payload = {
            "day": 0,
            "sell_to_utility": [bool(x) for x in pref.sell_to_utility]
            if pref.sell_to_utility is not None else None,
            "urgency": pref.u, "t_set": pref.t_set,
        }
        res = network.submit(sign_transaction(keys[name], "RegisterPreference",
                                              payload, name, next_nonce(name)))
        if not res.ok:
            raise MarketError(f"preference submission failed: {res.reason}")
    for tr in scenario.trades:
        name = f"user{tr.seller_bus}"
        payload = {"seller_bus": tr.seller_bus, "buyer_bus": tr.buyer_bus,
                   "ett_type": tr.ett_type, "window": list(tr.window),
                   "energy": tr.energy, "price": tr.price}
        res = network.submit(sign_transaction(keys[name], "TradeOffer",
                                              payload, name, next_nonce(name)))
        if not res.ok:
            raise MarketError(f"trade offer failed: {res.reason}")
    # day-ahead submissions land on-chain before the market reads them
    network.order_and_commit()


def scenario_from_world_state(scenario: Scenario, network: Network) -> Scenario:
    """Rebuild preferences and accepted trades from the ledger world state."""
    state = network.world_state()
    crowds = {}
    for bus, crowd in scenario.crowdsourcees.items():
        rec = state.get(f"pref/{bus}/0")
        if rec is None:
            crowds[bus] = replace(crowd, preferences=PreferenceSet())
            continue
        flags = rec.get("sell_to_utility")
        prefs = PreferenceSet(
            sell_to_utility=np.asarray(flags, dtype=bool) if flags else None,
            u=rec.get("urgency"), t_set=rec.get("t_set"))
        crowds[bus] = replace(crowd, preferences=prefs)
    trades = []
    seen = set()
    for key in sorted(state.data):
        rec = state.get(key)
        is_committed_contract = key.startswith("contract/") and \
            isinstance(rec, dict) and "seller_bus" in rec
        is_recorded_offer = key.startswith("offer/") and \
            isinstance(rec, dict) and rec.get("status") in ("open", "committed")
        if not (is_committed_contract or is_recorded_offer):
            continue
        sig = (rec["seller_bus"], rec.get("buyer_bus"), rec.get("ett_type"),
               tuple(rec.get("window", ())))
        if sig in seen:
            continue
        seen.add(sig)
        trades.append(TradeRequest(
            seller_bus=int(rec["seller_bus"]),
            buyer_bus=rec["buyer_bus"] if rec["buyer_bus"] == "utility"
            else int(rec["buyer_bus"]),
            ett_type=rec["ett_type"], window=tuple(rec["window"]),
            energy=float(rec["energy"]), price=rec.get("price")))
    # peer-trade lists inside preferences mirror the accepted trades
    for tr in trades:
        for end in (tr.seller_bus, tr.buyer_bus):
            if isinstance(end, int) and end in crowds:
                crowds[end].preferences.p2p_trades.append(tr)
    return replace(scenario, crowdsourcees=crowds, trades=trades)


class OperatorSigner:
    """Signs operator transactions with nonces continuing from world state."""

    def __init__(self, network: Network, key: KeyPair):
        self.network = network
        self.key = key
        self._nonce = network.world_state().get("nonce/operator", -1)

    def submit(self, kind: str, payload: dict) -> None:
        self._nonce += 1
        res = self.network.submit(sign_transaction(self.key, kind, payload,
                                                   "operator", self._nonce))
        if not res.ok:
            self._nonce -= 1
            raise MarketError(f"operator transaction rejected: {res.reason}")


def resolve_trade_price(trade: TradeRequest, equilibrium: Equilibrium) -> float:
    """Negotiated price, or the mean of both endpoints' day-ahead prices
    over the trade window when the peers left it open."""
    if trade.price is not None:
        return float(trade.price)
    hours = list(trade.hours)
    prices = [float(equilibrium.dlmp[trade.seller_bus][t]) for t in hours]
    if isinstance(trade.buyer_bus, int):
        prices += [float(equilibrium.dlmp[trade.buyer_bus][t]) for t in hours]
    return float(np.mean(prices))


def record_phase1_contracts(signer: OperatorSigner, live: Scenario,
                            equilibrium: Equilibrium) -> None:
    """Day-ahead smart-contract records: generator/CT1 schedules, peer trades."""
    sched_digest = hashlib.sha256(
        np.ascontiguousarray(equilibrium.p_g_eq[live.feeder.root]).tobytes()
    ).hexdigest()
    signer.submit("ContractCommit", {
        "key": "contract/phase1/schedules",
        "record": {"kind": "type-a-day-ahead", "parties": "generators+ct1",
                   "schedule_digest": sched_digest,
                   "objective": equilibrium.objective}})
    for tr in live.trades:
        if tr.ett_type != "B":
            continue
        signer.submit("ContractCommit", {
            "key": f"contract/typeB/{tr.seller_bus}-{tr.buyer_bus}",
            "record": {"kind": "type-b-peer-trade", "seller_bus": tr.seller_bus,
                       "buyer_bus": tr.buyer_bus, "ett_type": "B",
                       "window": list(tr.window), "energy": tr.energy,
                       "price": resolve_trade_price(tr, equilibrium)}})


def settle_hour(signer: OperatorSigner, network: Network,
                outcome: IncentiveOutcome) -> dict[int, float]:
    """Hourly settlement and CT2 type-A contract record; returns payments."""
    entries = []
    sold = {}
    paid: dict[int, float] = {}
    for bus, s in sorted(outcome.sellers.items()):
        if s.payment > PAY_EPS:
            ident = network.registrar.by_bus(bus)
            entries.append({"bus": bus, "account": ident.id,
                            "amount": round(s.payment, 9),
                            "p_ni_mwh": round(s.p_ni, 9),
                            "lambda_eq": round(s.lambda_eq, 9),
                            "lambda_a": round(s.lambda_a, 9)})
            sold[str(bus)] = round(s.p_ni, 9)
            paid[bus] = s.payment
    if entries:
        signer.submit("SettleIncentive", {"hour": outcome.hour, "entries": entries})
    signer.submit("ContractCommit", {
        "key": f"contract/typeA/hour{outcome.hour}",
        "record": {"kind": "type-a-hour", "hour": outcome.hour, "status": "settled",
                   "sellers": sold, "b_total": round(outcome.b_total, 9)}})
    return paid


def run_day(scenario: Scenario, network: Network | None = None,
            keys: dict[str, KeyPair] | None = None, n_peers: int = 4,
            forecast_source=None, solver_options=None,
            hours: int | None = None, steps_per_hour: int = 1,
            lindistflow: bool = False) -> tuple[DayReport, Network]:
    """Execute the full daily operation loop against a (fresh) ledger.

    ``steps_per_hour`` > 1 re-solves the incentive program on a finer
    cadence within each hour (forecasts held at the hourly value); every
    sub-step settles on-chain within the hour's block.
    """
    if network is None:
        network, keys = build_network(scenario, scenario.seed, n_peers=n_peers)
        submit_day_ahead(scenario, network, keys)
    assert keys is not None, "a pre-built network needs its signing keys"
    signer = OperatorSigner(network, keys["operator"])

    # Phase I: preferences and trades come back off the chain
    live = scenario_from_world_state(scenario, network)
    equilibrium = solve_phase1(live, options=solver_options,
                               lindistflow=lindistflow)
    record_phase1_contracts(signer, live, equilibrium)
    network.order_and_commit()  # the phase-one block

    sub = replace(live, dt=live.dt / steps_per_hour) if steps_per_hour > 1 else live
    outcomes: list[IncentiveOutcome] = []
    failures: list[tuple[int, str]] = []
    seller_totals: dict[int, float] = {}
    source = forecast_source or hourly_forecasts
    n_hours = live.horizon if hours is None else min(hours, live.horizon)
    for t in range(n_hours):
        try:
            hour_outcomes = []
            for j in range(steps_per_hour):
                oc = solve_phase2(sub, equilibrium, t,
                                  forecasts_1h=source(live, t),
                                  options=solver_options,
                                  lindistflow=lindistflow)
                if steps_per_hour > 1:
                    oc.hour = t + j / steps_per_hour
                hour_outcomes.append(oc)
        except MarketError as exc:
            # keep the market moving: the generator rebalances this hour alone
            failures.append((t, str(exc)))
            outcome = IncentiveOutcome(
                hour=t, status="failed", sellers={},
                p_g={b: float(equilibrium.p_g_eq[b][t]) for b in equilibrium.p_g_eq},
                p_g_deviation={b: 0.0 for b in equilibrium.p_g_eq},
                b_total=0.0, objective=float("nan"), losses=float("nan"))
            outcomes.append(outcome)
            signer.submit("ContractCommit", {
                "key": f"contract/typeA/hour{t}",
                "record": {"kind": "type-a-hour", "hour": t, "status": "failed",
                           "reason": str(exc)[:200]}})
            network.order_and_commit()
            continue
        for oc in hour_outcomes:
            outcomes.append(oc)
            paid = settle_hour(signer, network, oc)
            for bus, amount in paid.items():
                seller_totals[bus] = seller_totals.get(bus, 0.0) + amount
            network.order_and_commit()  # one block per operating (sub-)step

    # end-of-day reconciliation: peer trades settle buyer-to-seller
    peer_settlements = []
    for i, tr in enumerate(live.trades):
        if tr.ett_type != "B" or not isinstance(tr.buyer_bus, int):
            continue
        buyer = network.registrar.by_bus(tr.buyer_bus)
        seller = network.registrar.by_bus(tr.seller_bus)
        if buyer is None or seller is None:
            continue
        unit_price = resolve_trade_price(tr, equilibrium)
        amount = tr.energy * unit_price
        signer.submit("SettleIncentive", {
            "hour": f"day-end-{i}", "payer": buyer.id,
            "entries": [{"bus": tr.seller_bus, "account": seller.id,
                         "amount": round(amount, 9), "p_ni_mwh": tr.energy,
                         "lambda_eq": round(unit_price, 9), "lambda_a": 0.0}]})
        peer_settlements.append({
            "seller_bus": tr.seller_bus, "buyer_bus": tr.buyer_bus,
            "energy_mwh": tr.energy, "price": unit_price, "amount": amount})
    if peer_settlements:
        network.order_and_commit()

    report = DayReport(
        scenario_name=live.name, seed=live.seed,
        scenario_hash=scenario_hash(live),
        equilibrium=equilibrium, outcomes=outcomes, failures=failures,
        chain_id=network.config.chain_id,
        final_height=network.primary.height,
        final_state_hash=network.primary.state.hash(),
        seller_totals=seller_totals,
        peer_settlements=peer_settlements)
    return report, network
