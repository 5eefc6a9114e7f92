"""Optimization problem builders for the two market phases.

All network quantities enter the solver in per-unit on the feeder base;
costs are converted so the objective stays in dollars.  The real-power
balance row of bus i at hour t is labeled ``pbal[i][t]``; its dual is the
distribution locational marginal price at that bus and hour.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..convex import BRANCH_FLOW_TAG, ConicProblem, ProblemBuilder
from ..ders import CT1, CT2
from ..feeder import topology
from ..scenario import Scenario, _naive_shapeable_schedule


class MarketError(RuntimeError):
    """Problem construction or solve failure."""


@dataclass
class GridIndex:
    """Variable indices of a built problem, keyed by bus/line and hour."""

    hours: list[int]
    base_mva: float
    v: dict[tuple[int, int], int] = field(default_factory=dict)
    l: dict[tuple[int, int], int] = field(default_factory=dict)
    P: dict[tuple[int, int], int] = field(default_factory=dict)
    Q: dict[tuple[int, int], int] = field(default_factory=dict)
    pg: dict[tuple[int, int], int] = field(default_factory=dict)
    qg: dict[tuple[int, int], int] = field(default_factory=dict)
    bat_e: dict[tuple[int, int], int] = field(default_factory=dict)
    bat_h: dict[tuple[int, int], int] = field(default_factory=dict)
    bat_d: dict[tuple[int, int], int] = field(default_factory=dict)
    shape: dict[tuple[int, int], int] = field(default_factory=dict)
    solar: dict[tuple[int, int], int] = field(default_factory=dict)
    lam_a: dict[int, int] = field(default_factory=dict)
    pay: dict[int, int] = field(default_factory=dict)
    fixed_injection: dict[tuple[int, int], float] = field(default_factory=dict)


class _GridProblem:
    """Branch-flow network skeleton shared by both phases."""

    def __init__(self, scenario: Scenario, hours: list[int]):
        self.sc = scenario
        self.hours = hours
        self.b = ProblemBuilder()
        self.topo = topology(scenario.feeder)
        self.base = scenario.feeder.base_mva
        self.idx = GridIndex(hours=hours, base_mva=self.base)
        # injection terms accumulated per (bus, t): variable coeffs and consts
        self._inj_vars: dict[tuple[int, int], dict[int, float]] = {}
        self._inj_const: dict[tuple[int, int], float] = {}
        self._qinj_vars: dict[tuple[int, int], dict[int, float]] = {}
        self._qinj_const: dict[tuple[int, int], float] = {}
        self._build_network()

    # -- plumbing ------------------------------------------------------------
    def mw(self, value: float) -> float:
        return value / self.base

    def add_p(self, bus: int, t: int, var: int | None, coeff: float = 1.0,
              const: float = 0.0) -> None:
        """Accumulate a real-power injection term (p.u.) at (bus, t)."""
        key = (bus, t)
        if var is not None:
            self._inj_vars.setdefault(key, {})[var] = \
                self._inj_vars.get(key, {}).get(var, 0.0) + coeff
        if const:
            self._inj_const[key] = self._inj_const.get(key, 0.0) + const

    def add_q(self, bus: int, t: int, var: int | None, coeff: float = 1.0,
              const: float = 0.0) -> None:
        key = (bus, t)
        if var is not None:
            self._qinj_vars.setdefault(key, {})[var] = \
                self._qinj_vars.get(key, {}).get(var, 0.0) + coeff
        if const:
            self._qinj_const[key] = self._qinj_const.get(key, 0.0) + const

    # -- network skeleton ------------------------------------------------------
    def _build_network(self):
        fe = self.sc.feeder
        b = self.b
        loss_price = self.sc.effective_loss_price() * self.base  # $ per p.u.-h
        for t in self.hours:
            for bus in sorted(x.id for x in fe.buses):
                if bus == fe.root:
                    self.idx.v[bus, t] = b.new_var(f"v[{bus}][{t}]", lb=1.0, ub=1.0)
                else:
                    self.idx.v[bus, t] = b.new_var(f"v[{bus}][{t}]",
                                                   lb=fe.v_min, ub=fe.v_max)
            for ln in sorted(fe.lines, key=lambda x: x.child_bus):
                c = ln.child_bus
                il = b.new_var(f"l[{c}][{t}]", lb=0.0)
                ip = b.new_var(f"P[{c}][{t}]")
                iq = b.new_var(f"Q[{c}][{t}]")
                self.idx.l[c, t] = il
                self.idx.P[c, t] = ip
                self.idx.Q[c, t] = iq
                vc = self.idx.v[c, t]
                vp = self.idx.v[ln.parent_bus, t]
                # v_parent = v_child - 2(r P + x Q) + (r^2 + x^2) l
                b.add_eq({vp: 1.0, vc: -1.0, ip: 2.0 * ln.r, iq: 2.0 * ln.x,
                          il: -(ln.r**2 + ln.x**2)}, 0.0, f"volt[{c}][{t}]")
                # ||(2P, 2Q, v - l)|| <= v + l  (relaxed P^2 + Q^2 = v l)
                b.add_soc(
                    [{ip: 2.0}, {iq: 2.0}, {vc: 1.0, il: -1.0}], [0.0, 0.0, 0.0],
                    {vc: 1.0, il: 1.0}, 0.0, f"bfm[{c}][{t}]",
                    tag=BRANCH_FLOW_TAG, loss_var=il)
                b.add_lin_cost(il, loss_price * ln.r * self.sc.dt)

    def add_generators(self, deviation_ref: dict[tuple[int, int], float] | None = None):
        """Generator variables, bounds, ramp, and (deviation) cost."""
        b = self.b
        for bus in sorted(self.sc.devices.generators):
            g = self.sc.devices.generators[bus]
            prev = None
            for t in self.hours:
                ipg = b.new_var(f"pg[{bus}][{t}]", lb=self.mw(g.p_min),
                                ub=self.mw(g.p_max))
                iqg = b.new_var(
                    f"qg[{bus}][{t}]",
                    lb=self.mw(g.q_min) if g.q_min is not None else None,
                    ub=self.mw(g.q_max) if g.q_max is not None else None)
                self.idx.pg[bus, t] = ipg
                self.idx.qg[bus, t] = iqg
                self.add_p(bus, t, ipg)
                self.add_q(bus, t, iqg)
                if prev is not None and g.ramp < (g.p_max - g.p_min):
                    r = self.mw(g.ramp)
                    b.add_ineq({ipg: 1.0, prev: -1.0}, r, f"rampup[{bus}][{t}]")
                    b.add_ineq({ipg: -1.0, prev: 1.0}, r, f"rampdn[{bus}][{t}]")
                prev = ipg
                alpha, beta, gamma = g.coeff_at(t)
                a_pu = alpha * self.base**2
                b_pu = beta * self.base
                if deviation_ref is None:
                    b.add_quad_cost(ipg, a_pu * self.sc.dt)
                    b.add_lin_cost(ipg, b_pu * self.sc.dt)
                    b.add_const_cost(gamma * self.sc.dt)
                else:
                    # cost of deviating from the day-ahead setpoint
                    ref = deviation_ref[bus, t]
                    b.add_quad_cost(ipg, a_pu * self.sc.dt)
                    b.add_lin_cost(ipg, (-2.0 * a_pu * ref + b_pu) * self.sc.dt)
                    b.add_const_cost((a_pu * ref**2 - b_pu * ref + gamma) * self.sc.dt)

    def finalize(self) -> tuple[ConicProblem, GridIndex]:
        """Emit balance rows and freeze the problem."""
        fe = self.sc.feeder
        b = self.b
        for t in self.hours:
            for bus in sorted(x.id for x in fe.buses):
                coeffs: dict[int, float] = {}
                for child in self.topo.children[bus]:
                    ln = fe.line_of(child)
                    coeffs[self.idx.P[child, t]] = 1.0
                    coeffs[self.idx.l[child, t]] = -ln.r
                if bus != fe.root:
                    coeffs[self.idx.P[bus, t]] = coeffs.get(self.idx.P[bus, t], 0.0) - 1.0
                for var, cf in self._inj_vars.get((bus, t), {}).items():
                    coeffs[var] = coeffs.get(var, 0.0) + cf
                rhs = -self._inj_const.get((bus, t), 0.0)
                b.add_eq(coeffs, rhs, f"pbal[{bus}][{t}]")

                qcoeffs: dict[int, float] = {}
                for child in self.topo.children[bus]:
                    ln = fe.line_of(child)
                    qcoeffs[self.idx.Q[child, t]] = 1.0
                    qcoeffs[self.idx.l[child, t]] = -ln.x
                if bus != fe.root:
                    qcoeffs[self.idx.Q[bus, t]] = qcoeffs.get(self.idx.Q[bus, t], 0.0) - 1.0
                for var, cf in self._qinj_vars.get((bus, t), {}).items():
                    qcoeffs[var] = qcoeffs.get(var, 0.0) + cf
                qrhs = -self._qinj_const.get((bus, t), 0.0)
                b.add_eq(qcoeffs, qrhs, f"qbal[{bus}][{t}]")
        return self.b.build(), self.idx


def _ct2_fixed_phase1(scenario: Scenario, bus: int, t: int) -> float:
    """Day-ahead pinned injection (MW) of a CT2 bus: Type B trades only.

    Non-trading CT2 devices are excluded from day-ahead scheduling, and
    hour-ahead utility sales are settled in phase two.
    """
    total = 0.0
    for tr in scenario.trades:
        if tr.ett_type != "B" or t not in tr.hours:
            continue
        if tr.seller_bus == bus:
            total += tr.rate
        if tr.buyer_bus == bus:
            total -= tr.rate
    return total


def ct2_declared_behavior(scenario: Scenario, bus: int, t: int,
                          solar_actual: float) -> tuple[float, float]:
    """(net injection eligible for incentives, total device injection), MW.

    CT2 devices run on their owners' terms: shapeable loads follow the
    owner's naive schedule, Type B trade commitments are delivered at the
    declared constant rate, and solar is fed in only while a sell-to-utility
    flag is up (surplus beyond peer-trade commitments).  Peer-trade energy is
    settled bilaterally, so it never enters the incentive-eligible injection.
    """
    crowd = scenario.crowdsourcees.get(bus)
    if crowd is None or crowd.ct_class != CT2:
        raise MarketError(f"bus {bus} is not a CT2 crowdsourcee")
    type_b_net = _ct2_fixed_phase1(scenario, bus, t)
    ps = 0.0
    if bus in scenario.devices.shapeables:
        ps = float(_naive_shapeable_schedule(scenario.devices.shapeables[bus],
                                             scenario.horizon)[t])
    type_b_out = max(type_b_net, 0.0)
    pr_sold = 0.0
    if crowd.preferences.sells_at(t):
        pr_sold = max(0.0, solar_actual - type_b_out)
    p_ni = pr_sold - ps  # battery beyond trade commitments stays idle
    return p_ni, type_b_net + p_ni


def build_cesopf(scenario: Scenario) -> tuple[ConicProblem, GridIndex]:
    """Day-ahead program: generation + CT1 DER schedules over the horizon."""
    hours = list(range(scenario.horizon))
    gp = _GridProblem(scenario, hours)
    b, idx = gp.b, gp.idx
    dt = scenario.dt
    gp.add_generators()

    ct1 = set(scenario.ct_buses(CT1))
    for bus in sorted(scenario.devices.batteries):
        if bus not in ct1:
            continue
        spec = scenario.devices.batteries[bus]
        prev = None
        for t in hours:
            ie = b.new_var(f"be[{bus}][{t}]", lb=gp.mw(spec.e_min), ub=gp.mw(spec.e_max))
            ih = b.new_var(f"bh[{bus}][{t}]", lb=0.0, ub=gp.mw(spec.p_cha_max))
            id_ = b.new_var(f"bd[{bus}][{t}]", lb=0.0, ub=gp.mw(spec.p_dis_max))
            idx.bat_e[bus, t] = ie
            idx.bat_h[bus, t] = ih
            idx.bat_d[bus, t] = id_
            coeffs = {ie: 1.0, ih: -spec.eta_in * dt, id_: dt / spec.eta_out}
            if prev is None:
                b.add_eq(coeffs, gp.mw(spec.e_init), f"bstate[{bus}][{t}]")
            else:
                coeffs[prev] = -1.0
                b.add_eq(coeffs, 0.0, f"bstate[{bus}][{t}]")
            prev = ie
            gp.add_p(bus, t, id_, 1.0)
            gp.add_p(bus, t, ih, -1.0)

    for bus in sorted(scenario.devices.shapeables):
        if bus not in ct1:
            continue
        spec = scenario.devices.shapeables[bus]
        total: dict[int, float] = {}
        u_pu = spec.u * gp.base**2
        smax_pu = gp.mw(spec.s_max)
        for t in hours:
            inside = spec.t_start <= t <= spec.t_end
            if inside:
                iv = b.new_var(f"sh[{bus}][{t}]", lb=gp.mw(spec.s_min), ub=smax_pu)
                idx.shape[bus, t] = iv
                total[iv] = dt
                gp.add_p(bus, t, iv, -1.0)
                if t <= spec.t_set and spec.u > 0:
                    b.add_quad_cost(iv, u_pu * dt)
                    b.add_lin_cost(iv, -2.0 * u_pu * smax_pu * dt)
                    b.add_const_cost(u_pu * smax_pu**2 * dt)
            elif t <= spec.t_set and spec.u > 0:
                b.add_const_cost(u_pu * smax_pu**2 * dt)  # load pinned off
        b.add_eq(total, gp.mw(spec.e_demand), f"shdem[{bus}]")

    for bus in sorted(scenario.forecasts_24h.solar):
        crowd = scenario.crowdsourcees.get(bus)
        if crowd is None or crowd.ct_class != CT1:
            continue  # CT2 solar enters via declared behavior only
        values = scenario.forecasts_24h.solar[bus].values
        for t in hours:
            avail = gp.mw(float(values[t]))
            if scenario.allow_solar_curtailment:
                iv = b.new_var(f"sol[{bus}][{t}]", lb=0.0, ub=avail)
                idx.solar[bus, t] = iv
                gp.add_p(bus, t, iv, 1.0)
            else:
                gp.add_p(bus, t, None, const=avail)

    for bus in sorted(scenario.forecasts_24h.load):
        prof = scenario.forecasts_24h.load[bus]
        for t in hours:
            gp.add_p(bus, t, None, const=-gp.mw(float(prof.values[t])))
            if prof.reactive is not None:
                gp.add_q(bus, t, None, const=-gp.mw(float(prof.reactive[t])))

    for bus in sorted(scenario.ct_buses(CT2)):
        for t in hours:
            fixed = _ct2_fixed_phase1(scenario, bus, t)
            if fixed:
                gp.add_p(bus, t, None, const=gp.mw(fixed))
                idx.fixed_injection[bus, t] = fixed

    return gp.finalize()


def build_cesid(scenario: Scenario, equilibrium, t: int,
                loads_1h: dict[int, float], solar_1h: dict[int, float],
                b_total: float, lambda_a_cap: float = 10.0
                ) -> tuple[ConicProblem, GridIndex]:
    """Hour-ahead incentive program for hour t.

    Day-ahead DER schedules are pinned at the phase-one equilibrium, CT2
    behavior enters as declared constants, and each CT2 bus gets a price
    adjustment and a payment variable tied by b = p_ni (dlmp + adjustment).
    """
    if not 0 <= t < scenario.horizon:
        raise MarketError(f"hour {t} outside horizon 0..{scenario.horizon - 1}")
    gp = _GridProblem(scenario, [t])
    b, idx = gp.b, gp.idx
    gp.add_generators(deviation_ref={
        (bus, t): gp.mw(equilibrium.p_g_eq[bus][t])
        for bus in scenario.devices.generators})

    ct1 = set(scenario.ct_buses(CT1))
    for bus in sorted(scenario.devices.batteries):
        if bus in ct1:
            p_b = equilibrium.battery_net(bus, t)
            gp.add_p(bus, t, None, const=gp.mw(p_b))
    for bus in sorted(scenario.devices.shapeables):
        if bus in ct1:
            gp.add_p(bus, t, None, const=-gp.mw(equilibrium.shapeable_at(bus, t)))
    for bus in sorted(solar_1h):
        crowd = scenario.crowdsourcees.get(bus)
        if crowd is None or crowd.ct_class != CT1:
            continue
        avail = gp.mw(solar_1h[bus])
        if scenario.allow_solar_curtailment:
            iv = b.new_var(f"sol[{bus}][{t}]", lb=0.0, ub=avail)
            idx.solar[bus, t] = iv
            gp.add_p(bus, t, iv, 1.0)
        else:
            gp.add_p(bus, t, None, const=avail)
    for bus in sorted(loads_1h):
        gp.add_p(bus, t, None, const=-gp.mw(loads_1h[bus]))
        prof = scenario.forecasts_24h.load.get(bus)
        if prof is not None and prof.reactive is not None and prof.values[t] > 0:
            # hour-ahead reactive scales with the real-power update
            qv = float(prof.reactive[t]) * loads_1h[bus] / float(prof.values[t])
            gp.add_q(bus, t, None, const=-gp.mw(qv))

    # CT2 declared behavior and incentive variables
    p_ni_mwh: dict[int, float] = {}
    for bus in sorted(scenario.ct_buses(CT2)):
        p_ni, injection = ct2_declared_behavior(scenario, bus, t,
                                                solar_1h.get(bus, 0.0))
        if injection:
            gp.add_p(bus, t, None, const=gp.mw(injection))
        idx.fixed_injection[bus, t] = injection
        p_ni_mwh[bus] = p_ni * scenario.dt

    budget_terms: dict[int, float] = {}
    for bus in sorted(p_ni_mwh):
        lam_eq = equilibrium.dlmp[bus][t]
        lo = -lam_eq
        hi = max(lambda_a_cap * abs(lam_eq), lo)
        ila = b.new_var(f"lam_a[{bus}]", lb=lo, ub=hi)
        ib = b.new_var(f"pay[{bus}]", lb=0.0)
        idx.lam_a[bus] = ila
        idx.pay[bus] = ib
        b.add_eq({ib: 1.0, ila: -p_ni_mwh[bus]}, p_ni_mwh[bus] * lam_eq,
                 f"pay[{bus}]")
        b.add_lin_cost(ib, 1.0)
        budget_terms[ib] = -1.0
    if budget_terms:
        b.add_ineq(budget_terms, -b_total, "budget")
    elif b_total > 0:
        raise MarketError("positive incentive budget with no CT2 participants")

    problem, idx = gp.finalize()
    return problem, idx
