"""Phase solvers: day-ahead scheduling and hourly incentive design.

Phase one solves the full-horizon program and reads distribution prices
off the real-power balance duals.  Phase two re-solves single hours with
updated forecasts, pins day-ahead DER schedules, and prices CT2 net
injections through the budgeted incentive mechanism.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..convex import Solution, SolverOptions, linearize_socp_to_qp, solve
from ..ders import CT1, CT2, BatteryTrajectory, generation_cost
from ..feeder import BranchFlowState
from ..scenario import Scenario, hour_ahead_forecast
from .build import GridIndex, MarketError, build_cesid, build_cesopf, ct2_declared_behavior

PHASE_TOL = 1e-8
PHASE_GAP_TOL = 1e-6


@dataclass
class Equilibrium:
    """Day-ahead market outcome: setpoints, CT1 schedules, and prices."""

    p_g_eq: dict[int, np.ndarray]  # MW per generator bus
    q_g_eq: dict[int, np.ndarray]  # MVAr
    batteries: dict[int, BatteryTrajectory]  # MWh / MW, CT1 buses
    shapeables: dict[int, np.ndarray]  # MW, CT1 buses
    solar_used: dict[int, np.ndarray]  # MW (after curtailment where allowed)
    dlmp: dict[int, np.ndarray]  # $/MWh per bus
    branch_state: BranchFlowState  # p.u.
    objective: float  # $
    relaxation_residual: np.ndarray  # |P^2+Q^2 - v l| per (line, t), p.u.
    energy_balance_residual: np.ndarray  # per t, p.u.
    solver_iterations: int = 0

    def battery_net(self, bus: int, t: int) -> float:
        traj = self.batteries.get(bus)
        return float(traj.d[t] - traj.h[t]) if traj is not None else 0.0

    def shapeable_at(self, bus: int, t: int) -> float:
        series = self.shapeables.get(bus)
        return float(series[t]) if series is not None else 0.0

    @property
    def max_relaxation_residual(self) -> float:
        return float(self.relaxation_residual.max()) if self.relaxation_residual.size else 0.0


@dataclass
class SellerOutcome:
    bus: int
    p_ni: float  # MWh
    lambda_eq: float  # $/MWh
    lambda_a: float  # $/MWh
    payment: float  # $

    @property
    def final_price(self) -> float:
        return self.lambda_eq + self.lambda_a


@dataclass
class IncentiveOutcome:
    hour: int
    status: str
    sellers: dict[int, SellerOutcome]
    p_g: dict[int, float]  # MW at this hour
    p_g_deviation: dict[int, float]  # MW vs day-ahead
    b_total: float
    objective: float
    losses: float  # p.u.

    @property
    def total_paid(self) -> float:
        return sum(s.payment for s in self.sellers.values())

    def check_invariants(self, tol: float = 1e-6) -> list[str]:
        """Returns the violated incentive invariants (empty when clean)."""
        bad = []
        for bus, s in self.sellers.items():
            if s.payment < -1e-8:
                bad.append(f"negative payment at bus {bus}")
            if abs(s.payment - s.p_ni * s.final_price) > tol:
                bad.append(f"payment identity broken at bus {bus}")
            if s.p_ni <= 0 and s.payment > 1e-6:
                bad.append(f"payment without injection at bus {bus}")
        if self.sellers and self.total_paid < self.b_total - 1e-6:
            bad.append("budget floor missed")
        return bad


def _extract_branch_state(scenario: Scenario, sol: Solution, idx: GridIndex,
                          hours: list[int]) -> BranchFlowState:
    fe = scenario.feeder
    n, T = fe.n, len(hours)
    v = np.zeros((n, T))
    l = np.zeros((n - 1, T))
    P = np.zeros((n - 1, T))
    Q = np.zeros((n - 1, T))
    for k, t in enumerate(hours):
        for bus in range(1, n + 1):
            v[bus - 1, k] = sol.x[idx.v[bus, t]]
        for child in range(2, n + 1):
            l[child - 2, k] = sol.x[idx.l[child, t]]
            P[child - 2, k] = sol.x[idx.P[child, t]]
            Q[child - 2, k] = sol.x[idx.Q[child, t]]
    # net injections from flow conservation (root carries no upstream line)
    from ..feeder import topology
    topo = topology(fe)
    p = np.zeros((n, T))
    q = np.zeros((n, T))
    for k in range(T):
        for bus in range(1, n + 1):
            up_p = P[bus - 2, k] if bus != fe.root else 0.0
            up_q = Q[bus - 2, k] if bus != fe.root else 0.0
            acc_p, acc_q = 0.0, 0.0
            for child in topo.children[bus]:
                ln = fe.line_of(child)
                acc_p += P[child - 2, k] - ln.r * l[child - 2, k]
                acc_q += Q[child - 2, k] - ln.x * l[child - 2, k]
            p[bus - 1, k] = up_p - acc_p
            q[bus - 1, k] = up_q - acc_q
    state = BranchFlowState(v=v, p=p, q=q, l=l, P=P, Q=Q)
    state.check(fe, T)
    return state


def _relaxation_residual(scenario: Scenario, state: BranchFlowState) -> np.ndarray:
    fe = scenario.feeder
    out = np.zeros_like(state.l)
    for child in range(2, fe.n + 1):
        e = child - 2
        out[e, :] = np.abs(state.P[e, :] ** 2 + state.Q[e, :] ** 2
                           - state.v[child - 1, :] * state.l[e, :])
    return out


def _energy_balance_residual(scenario: Scenario, state: BranchFlowState) -> np.ndarray:
    # sum of net injections equals total thermal loss on a tree
    fe = scenario.feeder
    losses = np.zeros(state.l.shape[1])
    for child in range(2, fe.n + 1):
        losses += fe.line_of(child).r * state.l[child - 2, :]
    return np.abs(state.p.sum(axis=0) - losses)


def solve_phase1(scenario: Scenario,
                 options: SolverOptions | None = None,
                 lindistflow: bool = False) -> Equilibrium:
    """Solve the day-ahead program and extract schedules and prices.

    With ``lindistflow`` the cone relaxation is replaced by the linear
    lossless flow model (squared currents pinned to zero).
    """
    options = options or SolverOptions(tol=PHASE_TOL, gap_tol=PHASE_GAP_TOL, max_iter=200)
    problem, idx = build_cesopf(scenario)
    if lindistflow:
        problem = linearize_socp_to_qp(problem)
    sol = solve(problem, options)
    if sol.status != "optimal":
        raise MarketError(
            f"day-ahead solve ended with status {sol.status} "
            f"(residuals {sol.kkt_residuals})")
    hours = list(range(scenario.horizon))
    base = scenario.feeder.base_mva

    p_g = {}
    q_g = {}
    for bus in scenario.devices.generators:
        p_g[bus] = np.array([sol.x[idx.pg[bus, t]] for t in hours]) * base
        q_g[bus] = np.array([sol.x[idx.qg[bus, t]] for t in hours]) * base

    batteries = {}
    shapeables = {}
    ct1 = set(scenario.ct_buses(CT1))
    for bus in sorted(scenario.devices.batteries):
        if bus not in ct1:
            continue
        batteries[bus] = BatteryTrajectory(
            e=np.array([sol.x[idx.bat_e[bus, t]] for t in hours]) * base,
            h=np.array([sol.x[idx.bat_h[bus, t]] for t in hours]) * base,
            d=np.array([sol.x[idx.bat_d[bus, t]] for t in hours]) * base)
    for bus in sorted(scenario.devices.shapeables):
        if bus not in ct1:
            continue
        series = np.zeros(scenario.horizon)
        for t in hours:
            if (bus, t) in idx.shape:
                series[t] = sol.x[idx.shape[bus, t]] * base
        shapeables[bus] = series

    solar_used = {}
    for bus in sorted(scenario.forecasts_24h.solar):
        if scenario.crowdsourcees.get(bus) is None or \
                scenario.crowdsourcees[bus].ct_class != CT1:
            continue
        if scenario.allow_solar_curtailment:
            solar_used[bus] = np.array(
                [sol.x[idx.solar[bus, t]] for t in hours]) * base
        else:
            solar_used[bus] = scenario.forecasts_24h.solar[bus].values.copy()

    dlmp = {}
    for bus in range(1, scenario.feeder.n + 1):
        dlmp[bus] = np.array(
            [-sol.duals[f"pbal[{bus}][{t}]"] for t in hours]) / base / scenario.dt

    state = _extract_branch_state(scenario, sol, idx, hours)
    return Equilibrium(
        p_g_eq=p_g, q_g_eq=q_g, batteries=batteries, shapeables=shapeables,
        solar_used=solar_used, dlmp=dlmp, branch_state=state,
        objective=sol.objective_value,
        relaxation_residual=_relaxation_residual(scenario, state),
        energy_balance_residual=_energy_balance_residual(scenario, state),
        solver_iterations=sol.iterations)


def hourly_forecasts(scenario: Scenario, t: int) -> tuple[dict[int, float], dict[int, float]]:
    """Hour-ahead (load, solar) forecasts in MW, deterministic per scenario seed."""
    loads = {}
    solar = {}
    for bus, prof in scenario.forecasts_24h.load.items():
        loads[bus] = hour_ahead_forecast(prof.values, t, scenario.forecast_noise,
                                         scenario.seed, bus=bus, stream=0)
    for bus, prof in scenario.forecasts_24h.solar.items():
        solar[bus] = hour_ahead_forecast(prof.values, t, scenario.forecast_noise,
                                         scenario.seed, bus=bus, stream=1)
    return loads, solar


def ct2_net_injections(scenario: Scenario, t: int,
                       solar_1h: dict[int, float]) -> dict[int, float]:
    """Incentive-eligible net injection (MWh) per CT2 bus for hour t."""
    out = {}
    for bus in scenario.ct_buses(CT2):
        p_ni, _ = ct2_declared_behavior(scenario, bus, t, solar_1h.get(bus, 0.0))
        out[bus] = p_ni * scenario.dt
    return out


def default_budget(scenario: Scenario, t: int, p_ni_mwh: dict[int, float]) -> float:
    """Hourly incentive budget: what the substation generator would charge
    to produce the sellers' aggregate net injection itself.

    Buses currently drawing power (negative net injection) do not reduce
    the budget: they are served like any other load and earn nothing.
    """
    positive = sum(max(v, 0.0) for v in p_ni_mwh.values())
    if positive <= 0.0:
        return 0.0
    gen = scenario.devices.generators[scenario.feeder.root]
    return generation_cost(gen, positive / scenario.dt, t) * scenario.dt \
        - generation_cost(gen, 0.0, t) * scenario.dt


def solve_phase2(scenario: Scenario, equilibrium: Equilibrium, t: int,
                 forecasts_1h: tuple[dict[int, float], dict[int, float]] | None = None,
                 b_total: float | None = None,
                 options: SolverOptions | None = None,
                 lindistflow: bool = False) -> IncentiveOutcome:
    """Solve the hour-t incentive program and extract payments and prices."""
    options = options or SolverOptions(tol=PHASE_TOL, gap_tol=PHASE_GAP_TOL, max_iter=200)
    loads_1h, solar_1h = forecasts_1h if forecasts_1h is not None \
        else hourly_forecasts(scenario, t)
    p_ni = ct2_net_injections(scenario, t, solar_1h)
    if b_total is None:
        b_total = default_budget(scenario, t, p_ni)

    problem, idx = build_cesid(scenario, equilibrium, t, loads_1h, solar_1h, b_total)
    if lindistflow:
        problem = linearize_socp_to_qp(problem)
    sol = solve(problem, options)
    if sol.status != "optimal":
        raise MarketError(
            f"hour {t} incentive solve ended with status {sol.status} "
            f"(residuals {sol.kkt_residuals})")
    base = scenario.feeder.base_mva

    sellers = {}
    for bus in sorted(p_ni):
        lam_eq = float(equilibrium.dlmp[bus][t])
        lam_a = float(sol.x[idx.lam_a[bus]]) if bus in idx.lam_a else 0.0
        pay = float(sol.x[idx.pay[bus]]) if bus in idx.pay else 0.0
        sellers[bus] = SellerOutcome(bus=bus, p_ni=p_ni[bus], lambda_eq=lam_eq,
                                     lambda_a=lam_a, payment=pay)

    p_g = {}
    dev = {}
    for bus in scenario.devices.generators:
        val = float(sol.x[idx.pg[bus, t]]) * base
        p_g[bus] = val
        dev[bus] = val - float(equilibrium.p_g_eq[bus][t])

    losses = 0.0
    for child in range(2, scenario.feeder.n + 1):
        ln = scenario.feeder.line_of(child)
        losses += ln.r * float(sol.x[idx.l[child, t]])

    return IncentiveOutcome(hour=t, status=sol.status, sellers=sellers,
                            p_g=p_g, p_g_deviation=dev, b_total=b_total,
                            objective=sol.objective_value, losses=losses)


# -- serialization (CLI run-state persistence) --------------------------------

def equilibrium_to_doc(eq: Equilibrium) -> dict:
    arr = lambda a: [float(x) for x in a]
    return {
        "p_g_eq": {str(b): arr(v) for b, v in sorted(eq.p_g_eq.items())},
        "q_g_eq": {str(b): arr(v) for b, v in sorted(eq.q_g_eq.items())},
        "batteries": {str(b): {"e": arr(t.e), "h": arr(t.h), "d": arr(t.d)}
                      for b, t in sorted(eq.batteries.items())},
        "shapeables": {str(b): arr(v) for b, v in sorted(eq.shapeables.items())},
        "solar_used": {str(b): arr(v) for b, v in sorted(eq.solar_used.items())},
        "dlmp": {str(b): arr(v) for b, v in sorted(eq.dlmp.items())},
        "branch_state": {k: [arr(row) for row in getattr(eq.branch_state, k)]
                         for k in ("v", "p", "q", "l", "P", "Q")},
        "objective": eq.objective,
        "relaxation_residual": [arr(r) for r in eq.relaxation_residual],
        "energy_balance_residual": arr(eq.energy_balance_residual),
        "solver_iterations": eq.solver_iterations,
    }


def equilibrium_from_doc(doc: dict) -> Equilibrium:
    from ..feeder import BranchFlowState
    a = np.asarray
    return Equilibrium(
        p_g_eq={int(b): a(v) for b, v in doc["p_g_eq"].items()},
        q_g_eq={int(b): a(v) for b, v in doc["q_g_eq"].items()},
        batteries={int(b): BatteryTrajectory(e=a(t["e"]), h=a(t["h"]), d=a(t["d"]))
                   for b, t in doc["batteries"].items()},
        shapeables={int(b): a(v) for b, v in doc["shapeables"].items()},
        solar_used={int(b): a(v) for b, v in doc["solar_used"].items()},
        dlmp={int(b): a(v) for b, v in doc["dlmp"].items()},
        branch_state=BranchFlowState(**{k: a(doc["branch_state"][k])
                                        for k in ("v", "p", "q", "l", "P", "Q")}),
        objective=float(doc["objective"]),
        relaxation_residual=a(doc["relaxation_residual"]),
        energy_balance_residual=a(doc["energy_balance_residual"]),
        solver_iterations=int(doc["solver_iterations"]),
    )


def outcome_to_doc(oc: IncentiveOutcome) -> dict:
    return {
        "hour": oc.hour, "status": oc.status,
        "sellers": {str(b): {"p_ni": s.p_ni, "lambda_eq": s.lambda_eq,
                             "lambda_a": s.lambda_a, "payment": s.payment}
                    for b, s in sorted(oc.sellers.items())},
        "p_g": {str(b): v for b, v in sorted(oc.p_g.items())},
        "p_g_deviation": {str(b): v for b, v in sorted(oc.p_g_deviation.items())},
        "b_total": oc.b_total, "objective": oc.objective, "losses": oc.losses,
    }


def outcome_from_doc(doc: dict) -> IncentiveOutcome:
    sellers = {int(b): SellerOutcome(bus=int(b), p_ni=s["p_ni"],
                                     lambda_eq=s["lambda_eq"],
                                     lambda_a=s["lambda_a"], payment=s["payment"])
               for b, s in doc["sellers"].items()}
    return IncentiveOutcome(
        hour=int(doc["hour"]), status=doc["status"], sellers=sellers,
        p_g={int(b): v for b, v in doc["p_g"].items()},
        p_g_deviation={int(b): v for b, v in doc["p_g_deviation"].items()},
        b_total=float(doc["b_total"]), objective=float(doc["objective"]),
        losses=float(doc["losses"]))
