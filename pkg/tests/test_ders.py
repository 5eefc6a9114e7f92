import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdgrid.ders import (BatterySpec, BatteryTrajectory, DeviceError,
                            GeneratorSpec, InjectionComponents, PreferenceSet,
                            ShapeableLoadSpec, TradeRequest, battery_feasible,
                            battery_transition, ct2_net_injection, disutility,
                            generation_cost, net_injection, shapeable_feasible)


def spec_battery(**kw):
    base = dict(bus=2, eta_in=0.95, eta_out=0.9, p_cha_max=1.0, p_dis_max=1.0,
                e_min=0.0, e_max=4.0, e_init=1.0)
    base.update(kw)
    return BatterySpec(**base)


def test_battery_transition_idle():
    assert battery_transition(spec_battery(), 1.0, 0.0, 0.0) == 1.0


def test_battery_transition_charge():
    assert battery_transition(spec_battery(e_init=0.2), 0.2, 1.0, 0.0) == pytest.approx(1.15)


def test_battery_transition_discharge():
    assert battery_transition(spec_battery(p_dis_max=0.9), 1.0, 0.0, 0.9) == pytest.approx(0.0)


def test_battery_transition_rejects_bound_violation():
    with pytest.raises(DeviceError):
        battery_transition(spec_battery(), 1.0, 2.0, 0.0)
    with pytest.raises(DeviceError):
        battery_transition(spec_battery(), 1.0, 0.0, -0.5)


def test_battery_feasible_idle_trajectory():
    spec = spec_battery()
    T = 8
    traj = BatteryTrajectory(e=np.full(T, spec.e_init), h=np.zeros(T), d=np.zeros(T))
    ok, why = battery_feasible(spec, traj)
    assert ok and why is None


def test_battery_feasible_flags_discharge_limit():
    spec = spec_battery()
    T = 8
    d = np.zeros(T)
    d[5] = spec.p_dis_max + 0.5
    e = np.full(T, spec.e_init)
    e[5:] = spec.e_init - (d[5] / spec.eta_out)
    ok, why = battery_feasible(spec, BatteryTrajectory(e=e, h=np.zeros(T), d=d))
    assert not ok
    assert why == "discharge-limit at t=5"


def test_battery_feasible_flags_energy_drift():
    spec = spec_battery()
    T = 4
    h = np.full(T, 0.5)
    e = np.empty(T)
    prev = spec.e_init
    for t in range(T):
        prev = battery_transition(spec, prev, h[t], 0.0)
        e[t] = prev
    e[2] += 1e-3  # inject drift into the stored-energy series
    ok, why = battery_feasible(spec, BatteryTrajectory(e=e, h=h, d=np.zeros(T)))
    assert not ok
    assert why.startswith("transition at t=2")


def test_battery_energy_conservation_property():
    spec = spec_battery(e_max=10.0)
    rng = np.random.default_rng(3)
    T = 24
    h = rng.uniform(0, 0.3, T)
    d = rng.uniform(0, 0.2, T)
    e = np.empty(T)
    prev = spec.e_init
    for t in range(T):
        prev = battery_transition(spec, prev, h[t], d[t])
        e[t] = prev
    ok, _ = battery_feasible(spec, BatteryTrajectory(e=e, h=h, d=d))
    assert ok
    total = spec.e_init + np.sum(h * spec.eta_in - d / spec.eta_out)
    assert e[-1] == pytest.approx(total, abs=1e-8)


def shapeable(**kw):
    base = dict(bus=3, e_demand=4.0, t_start=8, t_end=12, s_min=0.0, s_max=2.0,
                u=0.5, t_set=12)
    base.update(kw)
    return ShapeableLoadSpec(**base)


def test_shapeable_feasible_accepts_block():
    series = np.zeros(24)
    series[8:12] = 1.0
    ok, why = shapeable_feasible(shapeable(), series)
    assert ok and why is None


def test_shapeable_flags_outside_window():
    series = np.zeros(24)
    series[8:12] = 1.0
    series[2] = 0.5
    ok, why = shapeable_feasible(shapeable(), series)
    assert not ok and why == "outside-window at t=2"


def test_shapeable_flags_energy_mismatch():
    series = np.zeros(24)
    series[8:12] = 1.0
    series[11] = 0.9
    ok, why = shapeable_feasible(shapeable(), series)
    assert not ok and why == "energy-demand"


def test_shapeable_rejects_infeasible_spec():
    with pytest.raises(DeviceError):
        shapeable(e_demand=100.0)


def test_generation_cost_cases():
    g = GeneratorSpec(bus=1, alpha=1.0, beta=0.0, gamma=0.0, p_min=0, p_max=10, ramp=10)
    assert generation_cost(g, 2.0) == 4.0
    g = GeneratorSpec(bus=1, alpha=0.0, beta=3.0, gamma=1.0, p_min=0, p_max=10, ramp=10)
    assert generation_cost(g, 2.0) == 7.0
    g = GeneratorSpec(bus=1, alpha=0.5, beta=1.0, gamma=0.0, p_min=0, p_max=10, ramp=10)
    assert generation_cost(g, 3.0) == 7.5


def test_generation_cost_convexity():
    g = GeneratorSpec(bus=1, alpha=0.7, beta=-2.0, gamma=5.0, p_min=-10, p_max=10, ramp=10)
    for p in np.linspace(-3, 3, 13):
        second = generation_cost(g, p + 0.5) - 2 * generation_cost(g, p) + generation_cost(g, p - 0.5)
        assert second >= -1e-12


def test_generator_rejects_concave_cost():
    with pytest.raises(DeviceError):
        GeneratorSpec(bus=1, alpha=-1.0, beta=0.0, gamma=0.0, p_min=0, p_max=1, ramp=1)


def test_net_injection_cases():
    assert net_injection(InjectionComponents()) == 0.0
    parts = InjectionComponents(pg=0.0, pb=0.5, pr=1.0, pu=0.3, ps=0.2)
    assert net_injection(parts) == pytest.approx(1.0)


def test_net_injection_ct2_exclusion():
    parts = InjectionComponents(pr=1.0, pu=0.3)
    assert net_injection(parts, ct_class="CT2", prefs=PreferenceSet()) == pytest.approx(-0.3)


def test_net_injection_exclusion_ignores_der_perturbations():
    prefs = PreferenceSet()
    rng = np.random.default_rng(7)
    base = net_injection(InjectionComponents(pu=0.4), ct_class="CT2", prefs=prefs)
    for _ in range(20):
        parts = InjectionComponents(pb=rng.normal(), pr=abs(rng.normal()),
                                    ps=abs(rng.normal()), pu=0.4)
        assert net_injection(parts, ct_class="CT2", prefs=prefs) == base


def test_ct2_net_injection_cases():
    assert ct2_net_injection(InjectionComponents(pr=1.0)) == 1.0
    assert ct2_net_injection(InjectionComponents(pr=0.5, ps=0.5)) == 0.0
    assert ct2_net_injection(InjectionComponents(pr=0.2, ps=0.5, pb=0.1)) == pytest.approx(-0.2)
    with pytest.raises(DeviceError):
        ct2_net_injection(InjectionComponents(pr=1.0), ct_class="CT1")


def test_disutility_cases():
    s = shapeable(u=0.0)
    assert disutility(s, 1.0, 5) == 0.0
    s = shapeable(u=1.0)
    assert disutility(s, s.s_max, 5) == 0.0
    s = shapeable(u=0.5)
    assert disutility(s, 0.0, 5) == pytest.approx(2.0)
    assert disutility(s, 0.0, s.t_set + 1) == 0.0


def test_trade_request_rules():
    tr = TradeRequest(seller_bus=53, buyer_bus=43, ett_type="B",
                      window=(9, 13), energy=0.119, price=40.0)
    assert tr.rate == pytest.approx(0.0238)
    assert list(tr.hours) == [9, 10, 11, 12, 13]
    with pytest.raises(DeviceError):
        TradeRequest(seller_bus=2, buyer_bus=3, ett_type="A", window=(0, 5), energy=1.0)
    with pytest.raises(DeviceError):
        TradeRequest(seller_bus=2, buyer_bus="utility", ett_type="B", window=(0, 5), energy=1.0)
    with pytest.raises(DeviceError):
        TradeRequest(seller_bus=2, buyer_bus="utility", ett_type="A", window=(0, 5), energy=-1.0)


def test_preferences_inactive_rule():
    assert PreferenceSet().inactive
    flags = np.zeros(24, dtype=bool)
    assert PreferenceSet(sell_to_utility=flags).inactive
    flags[6] = True
    assert not PreferenceSet(sell_to_utility=flags).inactive


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.0, max_value=1.0),
       st.floats(min_value=0.0, max_value=1.0))
def test_battery_transition_matches_closed_form(h, d):
    spec = spec_battery(e_min=-100, e_max=100)
    got = battery_transition(spec, 2.0, h, d)
    assert got == pytest.approx(2.0 + h * 0.95 - d / 0.9, abs=1e-12)
