"""Independent oracles used to cross-check the interior-point solver.

The active-set oracle solves small QPs/LPs by enumerating every subset of
inequality constraints as a candidate active set and solving the resulting
equality-constrained KKT system with dense least squares.  It shares no
code with the solver's iteration.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from crowdgrid.convex import ProblemBuilder


def active_set_oracle(problem, tol: float = 1e-8):
    """Brute-force KKT solution of a small QP (no cones).

    Returns (x, y_eq, z_ineq) for the best feasible KKT point found.
    """
    assert not problem.soc_blocks, "oracle handles polyhedral problems only"
    n = problem.num_vars
    Q = problem.Q.toarray()
    c = problem.c
    A = problem.A_eq.toarray() if problem.n_eq else np.zeros((0, n))
    b = problem.b_eq
    G = problem.G_in.toarray() if problem.n_ineq else np.zeros((0, n))
    h = problem.h_in
    m = G.shape[0]

    best = None
    for k in range(m + 1):
        for S in itertools.combinations(range(m), k):
            GS = G[list(S), :]
            na, ns = A.shape[0], len(S)
            K = np.zeros((n + na + ns, n + na + ns))
            K[:n, :n] = Q
            K[:n, n:n + na] = A.T
            K[:n, n + na:] = GS.T
            K[n:n + na, :n] = A
            K[n + na:, :n] = GS
            rhs = np.concatenate([-c, b, h[list(S)]])
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            if np.linalg.norm(K @ sol - rhs) > tol * max(1.0, np.linalg.norm(rhs)):
                continue  # inconsistent active set
            x = sol[:n]
            zS = sol[n + na:]
            if m and np.any(G @ x - h > tol):
                continue
            if np.any(zS < -tol):
                continue
            z = np.zeros(m)
            z[list(S)] = np.maximum(zS, 0.0)
            obj = 0.5 * x @ Q @ x + c @ x + problem.constant
            if best is None or obj < best[0] - 1e-12:
                best = (obj, x, sol[n:n + na], z)
    assert best is not None, "oracle found no KKT point (infeasible?)"
    return best[1], best[2], best[3]


def solver_suite():
    """Fixed suite of small problems with independently known answers.

    Yields (name, problem, expected) where expected maps:
      "x" -> primal vector, "duals" -> {label: value} (subset checked),
      or "oracle" -> True to compare against the active-set oracle.
    """
    out = []
    sq2 = math.sqrt(2.0)
    sq5 = math.sqrt(5.0)

    def add(name, build, expected):
        b = ProblemBuilder()
        build(b)
        out.append((name, b.build(), expected))

    # -- polyhedral problems, checked against the active-set oracle ---------
    def qp_bound(b):
        x = b.new_var("x")
        b.add_quad_cost(x, 1.0)
        b.add_ineq({x: -1.0}, -1.0, "ge1")
    add("qp-bound", qp_bound, {"oracle": True,
                               "x": [1.0], "duals": {"ge1": 2.0}})

    def eq_only(b):
        x = b.new_var("x")
        b.add_eq({x: 1.0}, 5.0, "fix")
    add("eq-only", eq_only, {"x": [5.0]})

    def lp_box(b):
        x = b.new_var("x", lb=0.0, ub=2.0)
        b.add_lin_cost(x, -1.0)
    add("lp-box", lp_box, {"oracle": True, "x": [2.0], "duals": {"ub:x": 1.0}})

    def lp_simplex(b):
        x = b.new_var("x", lb=0.0)
        y = b.new_var("y", lb=0.0)
        b.add_lin_cost(x, -1.0)
        b.add_lin_cost(y, -2.0)
        b.add_ineq({x: 1.0, y: 1.0}, 1.0, "cap")
    add("lp-simplex", lp_simplex, {"oracle": True, "x": [0.0, 1.0]})

    def qp_eq(b):
        x = b.new_var("x")
        y = b.new_var("y")
        b.add_quad_cost(x, 1.0)
        b.add_quad_cost(y, 1.0)
        b.add_lin_cost(x, -2.0)  # (x-1)^2 + (y-2)^2 up to constant
        b.add_lin_cost(y, -4.0)
        b.add_eq({x: 1.0, y: 1.0}, 1.0, "sum")
    add("qp-eq", qp_eq, {"oracle": True, "x": [0.0, 1.0]})

    def qp_eq_ineq(b):
        x = b.new_var("x", lb=0.5)
        y = b.new_var("y")
        b.add_quad_cost(x, 1.0)
        b.add_quad_cost(y, 2.0)
        b.add_eq({x: 1.0, y: 2.0}, 2.0, "mix")
    add("qp-eq-ineq", qp_eq_ineq, {"oracle": True})

    def lp_degenerate(b):
        x = b.new_var("x")
        b.add_lin_cost(x, 1.0)
        b.add_ineq({x: -1.0}, -1.0, "ge1a")
        b.add_ineq({x: -1.0}, -1.0, "ge1b")  # duplicate row
    add("lp-degenerate", lp_degenerate, {"x": [1.0]})

    def qp_3var(b):
        x = b.new_var("x", lb=0.0)
        y = b.new_var("y", lb=0.0)
        z = b.new_var("z", lb=0.0)
        b.add_quad_cost(x, 0.5)
        b.add_quad_cost(y, 1.0)
        b.add_quad_cost(z, 1.5)
        b.add_lin_cost(x, -1.0)
        b.add_lin_cost(y, -1.0)
        b.add_lin_cost(z, -1.0)
        b.add_eq({x: 1.0, y: 1.0, z: 1.0}, 1.0, "budget")
    add("qp-3var", qp_3var, {"oracle": True})

    # seeded random QPs, oracle-checked
    rng = np.random.default_rng(12345)
    for i in range(8):
        n = int(rng.integers(2, 4))
        L = rng.normal(size=(n, n))
        Qm = L @ L.T + 0.5 * np.eye(n)
        cv = rng.normal(size=n)
        lo = rng.uniform(-2.0, -0.5, size=n)
        hi = rng.uniform(0.5, 2.0, size=n)

        def rand_qp(b, n=n, Qm=Qm, cv=cv, lo=lo, hi=hi):
            idx = [b.new_var(f"x{j}", lb=float(lo[j]), ub=float(hi[j])) for j in range(n)]
            for j in range(n):
                b.add_quad_cost(idx[j], 0.5 * float(Qm[j, j]))
                b.add_lin_cost(idx[j], float(cv[j]))
            # off-diagonal terms kept zero: builder emits diagonal Q
        add(f"qp-rand-{i}", rand_qp, {"oracle": True})

    # -- second-order cone problems with analytic answers -------------------
    def soc_norm(b):
        t = b.new_var("t")
        b.add_lin_cost(t, 1.0)
        b.add_soc([{}, {}], [3.0, 4.0], {t: 1.0}, 0.0, "cone")
    add("soc-norm", soc_norm, {"x": [5.0], "duals": {"cone": 1.0}})

    def soc_disk_lp(b):
        x = b.new_var("x")
        y = b.new_var("y")
        b.add_lin_cost(x, 1.0)
        b.add_lin_cost(y, 1.0)
        b.add_soc([{x: 1.0}, {y: 1.0}], [0.0, 0.0], {}, 1.0, "disk")
    add("soc-disk-lp", soc_disk_lp,
        {"x": [-sq2 / 2, -sq2 / 2], "duals": {"disk": sq2}})

    def soc_slice(b):
        x = b.new_var("x")
        b.add_lin_cost(x, 1.0)
        b.add_soc([{}, {x: 1.0}], [2.0, 0.0], {}, 3.0, "slice")
    add("soc-slice", soc_slice, {"x": [-sq5], "duals": {"slice": 3.0 / sq5}})

    def soc_box(b):
        x = b.new_var("x", lb=0.0, ub=1.0)
        t = b.new_var("t")
        b.add_lin_cost(t, 1.0)
        b.add_soc([{x: 1.0}, {}], [-3.0, 4.0], {t: 1.0}, 0.0, "reach")
    add("soc-box", soc_box,
        {"x": [1.0, math.sqrt(20.0)], "duals": {"reach": 1.0, "ub:x": 1.0 / sq5}})

    def soc_qp(b):
        x = b.new_var("x")
        y = b.new_var("y")
        b.add_quad_cost(x, 1.0)
        b.add_quad_cost(y, 1.0)
        b.add_soc([{x: 1.0}, {y: 1.0}], [-1.0, -1.0], {}, 1.0, "disk")
    add("soc-qp", soc_qp,
        {"x": [1 - 1 / sq2, 1 - 1 / sq2], "duals": {"disk": 2 * (sq2 - 1)}})

    def soc_eq(b):
        x = b.new_var("x")
        y = b.new_var("y")
        b.add_lin_cost(y, 1.0)
        b.add_eq({x: 1.0}, 2.0, "pin")
        b.add_soc([{x: 1.0}, {y: 1.0}], [0.0, 0.0], {}, 3.0, "ball")
    add("soc-eq", soc_eq,
        {"x": [2.0, -sq5], "duals": {"ball": 3.0 / sq5, "pin": -2.0 / sq5}})

    def soc_two_cones(b):
        x = b.new_var("x")
        b.add_lin_cost(x, -1.0)
        b.add_soc([{x: 1.0}], [0.0], {}, 2.0, "c1")  # |x| <= 2
        b.add_soc([{x: 1.0}], [-1.0], {}, 2.5, "c2")  # |x-1| <= 2.5
    add("soc-two-cones", soc_two_cones, {"x": [2.0], "duals": {"c1": 1.0}})

    def feasibility(b):
        x = b.new_var("x", lb=1.0, ub=1.0)
    add("feasibility", feasibility, {"x": [1.0]})

    def lp_shifted(b):
        x = b.new_var("x")
        y = b.new_var("y")
        b.add_lin_cost(x, 2.0)
        b.add_lin_cost(y, 1.0)
        b.add_ineq({x: -1.0, y: -1.0}, -4.0, "lowsum")  # x + y >= 4
        b.add_ineq({x: -1.0, y: 1.0}, 1.0, "diff")      # -x + y <= 1
        b.add_ineq({y: -1.0}, 0.0, "ypos")
    add("lp-shifted", lp_shifted, {"oracle": True})

    def qp_active_pair(b):
        x = b.new_var("x")
        y = b.new_var("y")
        b.add_quad_cost(x, 1.0)
        b.add_quad_cost(y, 1.0)
        b.add_ineq({x: -1.0, y: -1.0}, -2.0, "sum2")  # x + y >= 2
        b.add_ineq({x: 1.0, y: -1.0}, 0.5, "skew")
    add("qp-active-pair", qp_active_pair, {"oracle": True})

    return out


# -- exact two-bus branch-flow oracle -----------------------------------------

def two_bus_flow(p2: float, q2: float, r: float, x: float,
                 iters: int = 60) -> dict:
    """Exact branch-flow solution of a substation + one bus feeder (p.u.).

    Net injection (p2, q2) at bus 2, root voltage pinned at 1.  Solved by
    fixed-point iteration on the bus-2 voltage with the cone tight.
    """
    P, Q = p2, q2
    v2 = 1.0
    for _ in range(iters):
        l = (P * P + Q * Q) / v2
        v2 = 1.0 + 2.0 * (r * P + x * Q) - l * (r * r + x * x)
    l = (P * P + Q * Q) / v2
    pg = r * l - P  # root balance: children flow + injection = 0
    qg = x * l - Q
    return {"v2": v2, "l": l, "P": P, "Q": Q, "pg": pg, "qg": qg}


def enumerate_shapeable_schedules(e_demand: float, s_max: float,
                                  t_start: int, t_end: int, horizon: int,
                                  units: int = 6):
    """All schedules meeting the energy demand on a discrete power grid."""
    import itertools as it

    hours = list(range(t_start, min(t_end, horizon - 1) + 1))
    step = e_demand / units
    out = []
    for combo in it.product(range(units + 1), repeat=len(hours)):
        if sum(combo) != units:
            continue
        series = [0.0] * horizon
        ok = True
        for h, k in zip(hours, combo):
            series[h] = k * step
            if series[h] > s_max + 1e-12:
                ok = False
                break
        if ok:
            out.append(series)
    return out
