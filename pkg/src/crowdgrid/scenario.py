"""Reference scenario construction: synthetic profiles, the bundled 56-bus
case study, crowdsourcee-class assignment, and the islanded variant.

Everything here is deterministic given (recipe, seed); scenario manifests
hash to stable values so runs can be reproduced and pinned on the ledger.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .ders import (CT1, CT2, BatterySpec, Crowdsourcee, DeviceError,
                   GeneratorSpec, PreferenceSet, Profile, ShapeableLoadSpec,
                   TradeRequest)
from .feeder import Feeder, feeder_to_doc, parse_feeder, topology


class ScenarioError(ValueError):
    """Recipe or scenario construction failure."""


@dataclass
class DeviceSet:
    generators: dict[int, GeneratorSpec] = field(default_factory=dict)
    batteries: dict[int, BatterySpec] = field(default_factory=dict)
    shapeables: dict[int, ShapeableLoadSpec] = field(default_factory=dict)


@dataclass
class Forecasts:
    """Day-ahead profiles: uncontrollable load (with reactive) and solar."""

    load: dict[int, Profile] = field(default_factory=dict)
    solar: dict[int, Profile] = field(default_factory=dict)


@dataclass
class Scenario:
    name: str
    feeder: Feeder
    devices: DeviceSet
    forecasts_24h: Forecasts
    crowdsourcees: dict[int, Crowdsourcee]
    trades: list[TradeRequest] = field(default_factory=list)
    horizon: int = 24
    dt: float = 1.0
    forecast_noise: float = 0.0
    seed: int = 0
    islanded: bool = False
    allow_solar_curtailment: bool = False
    loss_price: float | None = None  # $/MWh of thermal loss; None = mean beta
    manifest_extra: dict = field(default_factory=dict)

    def __post_init__(self):
        bus_ids = {b.id for b in self.feeder.buses}
        for tr in self.trades:
            if tr.seller_bus not in bus_ids:
                raise ScenarioError(f"trade seller bus {tr.seller_bus} unknown")
            if tr.buyer_bus != "utility" and tr.buyer_bus not in bus_ids:
                raise ScenarioError(f"trade buyer bus {tr.buyer_bus} unknown")
            if tr.ett_type == "B":
                for end in (tr.seller_bus, tr.buyer_bus):
                    if self.crowdsourcees.get(end, None) is None or \
                            self.crowdsourcees[end].ct_class != CT2:
                        raise ScenarioError(
                            f"Type B trade endpoint {end} is not a CT2 crowdsourcee")
            if tr.window[1] >= self.horizon:
                raise ScenarioError("trade window exceeds horizon")
        for prof in list(self.forecasts_24h.load.values()) + list(self.forecasts_24h.solar.values()):
            if len(prof.values) != self.horizon:
                raise ScenarioError("forecast length differs from horizon")

    # -- convenience views ---------------------------------------------------
    def ct_buses(self, ct_class: str) -> list[int]:
        return sorted(b for b, c in self.crowdsourcees.items() if c.ct_class == ct_class)

    def effective_loss_price(self) -> float:
        if self.loss_price is not None:
            return self.loss_price
        betas = [np.mean(np.asarray(g.beta, dtype=float))
                 for g in self.devices.generators.values()]
        return float(np.mean(betas)) if betas else 0.0

    def load_at(self, bus: int, t: int) -> float:
        prof = self.forecasts_24h.load.get(bus)
        return float(prof.values[t]) if prof is not None else 0.0

    def solar_at(self, bus: int, t: int) -> float:
        prof = self.forecasts_24h.solar.get(bus)
        return float(prof.values[t]) if prof is not None else 0.0


@dataclass
class ScenarioRecipe:
    """Knobs of the bundled case study; defaults follow the reference setup."""

    name: str = "sce56"
    feeder_doc: dict | None = None  # None = bundled 56-bus document
    peak_load: dict[int, float] | None = None  # MW per bus; None = bundled table
    battery_ratio: float = 0.8  # power as a fraction of bus peak load
    battery_hours: float = 4.0
    battery_init_soc: float = 0.2
    battery_eta: float = 0.95
    solar_ratio: float = 0.5
    shapeable_ratio: float = 0.2
    shapeable_duration: tuple[int, int] = (4, 8)
    shapeable_window: tuple[int, int] = (8, 23)   # 8 am .. 11 pm
    solar_window: tuple[int, int] = (6, 19)       # 6 am .. 7 pm
    forecast_noise: float = 0.05
    seed: int = 0
    load_power_factor: float = 0.95
    gen_alpha: float = 2.0   # $/MW^2 h
    gen_beta: float = 30.0   # $/MWh
    gen_gamma: float = 50.0  # $/h
    gen_p_max: float = 30.0  # MW

    def __post_init__(self):
        for nm in ("battery_ratio", "solar_ratio", "shapeable_ratio"):
            v = getattr(self, nm)
            if not 0.0 <= v <= 2.0:
                raise ScenarioError(f"{nm}={v} outside [0, 2]")
        if not 0.0 <= self.battery_init_soc <= 1.0:
            raise ScenarioError("battery_init_soc outside [0, 1]")
        for lo, hi in (self.shapeable_window, self.solar_window):
            if not (0 <= lo < hi <= 23):
                raise ScenarioError("window outside the 24-hour horizon")


def _bundled(name: str) -> dict:
    return json.loads(resources.files("crowdgrid.data").joinpath(name).read_text())


def bundled_feeder() -> Feeder:
    return parse_feeder(_bundled("sce56.json"))


def bundled_peaks() -> dict[int, float]:
    return {int(k): float(v) for k, v in _bundled("sce56_peaks.json").items()}


def _rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng([abs(int(k)) % (2**31) for k in keys])


def synth_load_profile(peak: float, seed: int, bus: int = 0) -> np.ndarray:
    """Double-hump daily load curve; max equals peak, min at least 0.3*peak."""
    if peak <= 0:
        raise ScenarioError("peak must be positive")
    rng = _rng(seed, bus, 101)
    t = np.arange(24, dtype=float)
    morning = rng.uniform(0.25, 0.40) * np.exp(-0.5 * ((t - 9.0) / 2.0) ** 2)
    evening = rng.uniform(0.55, 0.75) * np.exp(-0.5 * ((t - 19.0) / 2.5) ** 2)
    base = 0.40 + rng.normal(0.0, 0.01, size=24)
    shape = base + morning + evening
    shape = shape / shape.max()
    shape = np.maximum(shape, 0.3)
    return peak * shape


def synth_solar_profile(peak_load: float, ratio: float,
                        window: tuple[int, int] = (6, 19)) -> np.ndarray:
    """Clear-sky bell over the daylight window; max = ratio*peak_load at noon."""
    if ratio < 0:
        raise ScenarioError("solar ratio must be >= 0")
    t = np.arange(24, dtype=float)
    bell = np.exp(-0.5 * ((t - 12.0) / 3.2) ** 2)
    mask = (t >= window[0]) & (t <= window[1])
    return ratio * peak_load * bell * mask


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    return all(n % k for k in range(2, int(math.isqrt(n)) + 1))


def assign_ct_classes(feeder: Feeder) -> dict[int, Crowdsourcee]:
    """Prime-numbered buses host near-real-time (CT2) users, the rest CT1."""
    return {
        b.id: Crowdsourcee(bus=b.id, ct_class=CT2 if _is_prime(b.id) else CT1)
        for b in feeder.buses
    }


def hour_ahead_forecast(day_ahead: np.ndarray, t: int, noise: float, seed: int,
                        bus: int = 0, stream: int = 0) -> float:
    """Perturbed day-ahead value; deterministic in (seed, bus, t, stream)."""
    if noise < 0:
        raise ScenarioError("forecast noise must be >= 0")
    base = float(day_ahead[t])
    if noise == 0.0:
        return base
    eps = float(_rng(seed, bus, t, 7 + stream).normal(0.0, noise))
    eps = float(np.clip(eps, -3.0 * noise, 3.0 * noise))
    return max(0.0, base * (1.0 + eps))


def _naive_shapeable_schedule(spec: ShapeableLoadSpec, horizon: int) -> np.ndarray:
    """Run at s_max from the window start until the energy demand is met."""
    series = np.zeros(horizon)
    remaining = spec.e_demand
    for t in range(spec.t_start, spec.t_end + 1):
        take = min(spec.s_max, remaining)
        series[t] = take
        remaining -= take
        if remaining <= 1e-12:
            break
    return series


def build_case_study(recipe: ScenarioRecipe) -> Scenario:
    """Assemble the reference scenario: devices at every non-substation bus,
    prime-rule crowdsourcee classes, and the bundled trading storyline
    (bus 2 sells solar to the utility; bus 43 buys 0.119 MWh from bus 53)."""
    feeder = parse_feeder(recipe.feeder_doc) if recipe.feeder_doc else bundled_feeder()
    peaks = dict(recipe.peak_load) if recipe.peak_load else bundled_peaks()
    missing = [b.id for b in feeder.buses if b.id != feeder.root and b.id not in peaks]
    if missing:
        raise ScenarioError(f"no peak load for buses {missing}")

    crowds = assign_ct_classes(feeder)
    devices = DeviceSet()
    forecasts = Forecasts()
    tan_phi = math.tan(math.acos(recipe.load_power_factor))

    devices.generators[feeder.root] = GeneratorSpec(
        bus=feeder.root, alpha=recipe.gen_alpha, beta=recipe.gen_beta,
        gamma=recipe.gen_gamma, p_min=0.0, p_max=recipe.gen_p_max,
        ramp=recipe.gen_p_max,
    )

    for bus in sorted(peaks):
        if bus == feeder.root:
            continue
        peak = peaks[bus]
        load = synth_load_profile(peak, recipe.seed, bus)
        forecasts.load[bus] = Profile(bus=bus, kind="uncontrollable-load",
                                      values=load, reactive=load * tan_phi)
        if recipe.solar_ratio > 0:
            forecasts.solar[bus] = Profile(
                bus=bus, kind="solar",
                values=synth_solar_profile(peak, recipe.solar_ratio, recipe.solar_window))
        if recipe.battery_ratio > 0:
            p_lim = recipe.battery_ratio * peak
            e_max = recipe.battery_hours * p_lim
            devices.batteries[bus] = BatterySpec(
                bus=bus, eta_in=recipe.battery_eta, eta_out=recipe.battery_eta,
                p_cha_max=p_lim, p_dis_max=p_lim, e_min=0.0, e_max=e_max,
                e_init=recipe.battery_init_soc * e_max)
        if recipe.shapeable_ratio > 0:
            rng = _rng(recipe.seed, bus, 303)
            duration = int(rng.integers(recipe.shapeable_duration[0],
                                        recipe.shapeable_duration[1] + 1))
            s_max = recipe.shapeable_ratio * peak
            w0, w1 = recipe.shapeable_window
            devices.shapeables[bus] = ShapeableLoadSpec(
                bus=bus, e_demand=s_max * duration, t_start=w0, t_end=w1,
                s_min=0.0, s_max=s_max,
                u=float(rng.uniform(0.1, 0.9)),
                t_set=int(rng.integers(w0 + duration, w1 + 1)))

    trades: list[TradeRequest] = []
    sol_w = recipe.solar_window
    if 2 in crowds and crowds[2].ct_class == CT2 and 2 in forecasts.solar:
        flags = np.zeros(24, dtype=bool)
        flags[sol_w[0]:15] = True  # sells excess solar from 6 am to 2 pm
        crowds[2].preferences = PreferenceSet(sell_to_utility=flags)
    if all(b in crowds and crowds[b].ct_class == CT2 for b in (43, 53)):
        trade = TradeRequest(seller_bus=53, buyer_bus=43, ett_type="B",
                             window=(9, 13), energy=0.119, price=None)
        trades.append(trade)
        flags53 = np.zeros(24, dtype=bool)
        flags53[sol_w[0]:17] = True  # surplus solar to the utility, 6 am to 5 pm
        crowds[53].preferences = PreferenceSet(sell_to_utility=flags53,
                                               p2p_trades=[trade])
        crowds[43].preferences = PreferenceSet(p2p_trades=[trade])

    return Scenario(
        name=recipe.name, feeder=feeder, devices=devices, forecasts_24h=forecasts,
        crowdsourcees=crowds, trades=trades, horizon=24, dt=1.0,
        forecast_noise=recipe.forecast_noise, seed=recipe.seed,
        manifest_extra={"recipe": _recipe_doc(recipe)},
    )


def baseline_variant(scenario: Scenario) -> Scenario:
    """The no-DER comparison case: uncontrollable loads and generation only."""
    crowds = {b: Crowdsourcee(bus=b, ct_class=c.ct_class)
              for b, c in scenario.crowdsourcees.items()}
    return replace(
        scenario,
        name=scenario.name + "-baseline",
        devices=DeviceSet(generators=dict(scenario.devices.generators)),
        forecasts_24h=Forecasts(load=dict(scenario.forecasts_24h.load), solar={}),
        crowdsourcees=crowds,
        trades=[],
    )


def _islanded_feasible(scale: float, load_agg: np.ndarray, solar_agg: np.ndarray,
                       shape_energy: float, shape_power_cap: float,
                       solar_window: tuple[int, int],
                       batt_p: float, batt_e: float, batt_init_soc: float,
                       eta: float, margin: float = 1.10) -> bool:
    """Greedy single-battery dispatch check for a candidate DER scale."""
    solar = scale * solar_agg.copy()
    # place shapeable energy in the sunniest hours (the optimizer may do better)
    w0, w1 = solar_window
    load = load_agg.copy()
    hours = np.argsort(-solar[w0:w1 + 1]) + w0
    remaining = shape_energy
    for t in hours:
        take = min(shape_power_cap, remaining)
        load[t] += take
        remaining -= take
        if remaining <= 0:
            break
    e = batt_init_soc * scale * batt_e
    p_lim = scale * batt_p
    e_cap = scale * batt_e
    for t in range(24):
        surplus = solar[t] - margin * load[t]
        if surplus >= 0:
            charge = min(surplus, p_lim, (e_cap - e) / eta)
            e += charge * eta
        else:
            need = -surplus
            if need > p_lim or e - need / eta < 0:
                return False
            e -= need / eta
    return True


def islanded_variant(scenario: Scenario, scale_cap: float = 5.0) -> Scenario:
    """Self-sufficient microgrid: substation capped at zero output, every user
    CT1 (full DER control), solar and battery capacity scaled up until a
    greedy dispatch covers the day.  Solar may be curtailed."""
    load_agg = np.zeros(scenario.horizon)
    solar_agg = np.zeros(scenario.horizon)
    for prof in scenario.forecasts_24h.load.values():
        load_agg += prof.values
    for prof in scenario.forecasts_24h.solar.values():
        solar_agg += prof.values
    if solar_agg.max() == 0 or not scenario.devices.batteries:
        raise ScenarioError("islanded operation needs solar and batteries")
    shape_energy = sum(s.e_demand for s in scenario.devices.shapeables.values())
    shape_power_cap = sum(s.s_max for s in scenario.devices.shapeables.values())
    batt_p = sum(b.p_dis_max for b in scenario.devices.batteries.values())
    batt_e = sum(b.e_max for b in scenario.devices.batteries.values())
    init_soc = next(iter(scenario.devices.batteries.values()))
    init_frac = init_soc.e_init / init_soc.e_max
    eta = init_soc.eta_in
    recipe = scenario.manifest_extra.get("recipe", {})
    solar_window = tuple(recipe.get("solar_window", (6, 19)))

    def ok(k):
        return _islanded_feasible(k, load_agg, solar_agg, shape_energy,
                                  shape_power_cap, solar_window,
                                  batt_p, batt_e, init_frac, eta)

    if not ok(scale_cap):
        raise ScenarioError(f"no DER scale within [1, {scale_cap}] balances the day")
    lo, hi = 1.0, scale_cap
    if ok(lo):
        hi = lo
    while hi - lo > 1e-2:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    scale = round(math.ceil(hi * 100.0) / 100.0, 2)

    devices = DeviceSet(generators={}, batteries={}, shapeables=dict(scenario.devices.shapeables))
    for bus, g in scenario.devices.generators.items():
        devices.generators[bus] = replace(g, p_min=0.0, p_max=0.0)
    for bus, b in scenario.devices.batteries.items():
        devices.batteries[bus] = replace(
            b, p_cha_max=scale * b.p_cha_max, p_dis_max=scale * b.p_dis_max,
            e_max=scale * b.e_max, e_init=scale * b.e_init)
    forecasts = Forecasts(load=dict(scenario.forecasts_24h.load), solar={})
    for bus, prof in scenario.forecasts_24h.solar.items():
        forecasts.solar[bus] = Profile(bus=bus, kind="solar", values=scale * prof.values)
    crowds = {b: Crowdsourcee(bus=b, ct_class=CT1) for b in scenario.crowdsourcees}

    extra = dict(scenario.manifest_extra)
    extra["islanded_scale"] = scale
    return replace(
        scenario, name=scenario.name + "-island", devices=devices,
        forecasts_24h=forecasts, crowdsourcees=crowds, trades=[],
        forecast_noise=0.0, islanded=True, allow_solar_curtailment=True,
        manifest_extra=extra,
    )


# -- manifest ---------------------------------------------------------------

def _recipe_doc(recipe: ScenarioRecipe) -> dict:
    doc = {}
    for k, v in vars(recipe).items():
        if k in ("feeder_doc", "peak_load"):
            continue
        doc[k] = list(v) if isinstance(v, tuple) else v
    return doc


def _profile_doc(p: Profile) -> dict:
    doc = {"bus": p.bus, "kind": p.kind, "values": [round(float(v), 9) for v in p.values]}
    if p.reactive is not None:
        doc["reactive"] = [round(float(v), 9) for v in p.reactive]
    return doc


def scenario_to_doc(s: Scenario) -> dict:
    """Serializable scenario description (device document + registry)."""
    crowds = {}
    for bus, c in sorted(s.crowdsourcees.items()):
        pref = c.preferences
        crowds[str(bus)] = {
            "ct_class": c.ct_class,
            "sell_to_utility": [bool(x) for x in pref.sell_to_utility] if pref.sell_to_utility is not None else None,
            "trades": [_trade_doc(t) for t in pref.p2p_trades],
        }
    dev = {}
    for bus in sorted({*s.devices.batteries, *s.devices.shapeables,
                       *s.forecasts_24h.load, *s.forecasts_24h.solar,
                       *s.devices.generators}):
        entry = {}
        if bus in s.devices.generators:
            g = s.devices.generators[bus]
            entry["generator"] = {"alpha": _num(g.alpha), "beta": _num(g.beta),
                                  "gamma": _num(g.gamma), "p_min": g.p_min,
                                  "p_max": g.p_max, "ramp": g.ramp}
        if bus in s.devices.batteries:
            b = s.devices.batteries[bus]
            entry["battery"] = {"eta_in": b.eta_in, "eta_out": b.eta_out,
                                "p_cha_max": b.p_cha_max, "p_dis_max": b.p_dis_max,
                                "e_min": b.e_min, "e_max": b.e_max, "e_init": b.e_init}
        if bus in s.devices.shapeables:
            sh = s.devices.shapeables[bus]
            entry["shapeable"] = {"e_demand": sh.e_demand, "t_start": sh.t_start,
                                  "t_end": sh.t_end, "s_min": sh.s_min,
                                  "s_max": sh.s_max, "u": sh.u, "t_set": sh.t_set}
        if bus in s.forecasts_24h.load:
            entry["load_profile"] = _profile_doc(s.forecasts_24h.load[bus])
        if bus in s.forecasts_24h.solar:
            entry["solar_profile"] = _profile_doc(s.forecasts_24h.solar[bus])
        dev[str(bus)] = entry
    return {
        "name": s.name,
        "horizon": s.horizon,
        "dt": s.dt,
        "forecast_noise": s.forecast_noise,
        "seed": s.seed,
        "islanded": s.islanded,
        "allow_solar_curtailment": s.allow_solar_curtailment,
        "loss_price": s.effective_loss_price(),
        "feeder": feeder_to_doc(s.feeder),
        "devices": dev,
        "crowdsourcees": crowds,
        "trades": [_trade_doc(t) for t in s.trades],
        "extra": s.manifest_extra,
    }


def _num(v):
    arr = np.asarray(v, dtype=float)
    return float(arr) if arr.ndim == 0 else [float(x) for x in arr]


def _trade_doc(t: TradeRequest) -> dict:
    return {"seller_bus": t.seller_bus, "buyer_bus": t.buyer_bus,
            "ett_type": t.ett_type, "window": list(t.window),
            "energy": t.energy, "price": t.price}


def scenario_hash(s: Scenario) -> str:
    blob = json.dumps(scenario_to_doc(s), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
