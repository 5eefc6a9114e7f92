"""Primal-dual interior-point solver for conic quadratic programs.

Algorithm: Nesterov-Todd scaling over the product of the nonnegative
orthant and second-order cones, Mehrotra predictor-corrector steps, and a
sparse LDL-style factorization of the reduced KKT system with static
regularization plus iterative refinement.  Iteration order is fixed, so
identical inputs produce identical iterates.

Internal conic form (the inequality rows form the leading orthant block):

    minimize    (1/2) x'Qx + c'x
    subject to  A x = b
                G x + s = h,   s in K = R+^p x Q^{m_1} x ... x Q^{m_k}
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .problem import ConicProblem

STEP_FRACTION = 0.99
REG_EPS = 1e-11
REFINE_STEPS = 3


@dataclass
class SolverOptions:
    tol: float = 1e-7        # primal/dual feasibility tolerance
    gap_tol: float | None = None  # relative duality-gap tolerance; None = tol
    max_iter: int = 200
    verbose: bool = False

    @property
    def gap(self) -> float:
        return self.gap_tol if self.gap_tol is not None else self.tol


@dataclass
class Solution:
    status: str  # optimal | infeasible | unbounded | max-iter
    x: np.ndarray
    duals: dict[str, float]
    objective_value: float
    kkt_residuals: tuple[float, float, float]  # (primal, dual, gap)
    iterations: int
    eq_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ineq_duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    soc_duals: list[np.ndarray] = field(default_factory=list)
    slacks: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class _Cone:
    """Product-cone bookkeeping over a stacked slack vector."""

    def __init__(self, n_orthant: int, soc_dims: list[int]):
        self.p = n_orthant
        self.soc_dims = soc_dims
        self.dim = n_orthant + sum(soc_dims)
        self.degree = n_orthant + len(soc_dims)
        offs = [n_orthant]
        for m in soc_dims:
            offs.append(offs[-1] + m)
        self.offsets = offs  # soc block i occupies [offsets[i], offsets[i+1])

    def blocks(self, u: np.ndarray):
        for i, m in enumerate(self.soc_dims):
            lo = self.offsets[i]
            yield u[lo:lo + m]

    def identity(self) -> np.ndarray:
        e = np.zeros(self.dim)
        e[:self.p] = 1.0
        for i in range(len(self.soc_dims)):
            e[self.offsets[i]] = 1.0
        return e

    def interior_shift(self, u: np.ndarray) -> np.ndarray:
        """Shift a vector into the strict interior of the cone (initialization)."""
        out = u.copy()
        if self.p:
            a = -np.min(out[:self.p]) if self.p else 0.0
            if a >= 0:
                out[:self.p] += 1.0 + a
        for i, m in enumerate(self.soc_dims):
            lo = self.offsets[i]
            a = np.linalg.norm(out[lo + 1:lo + m]) - out[lo]
            if a >= 0:
                out[lo] += 1.0 + a
        return out

    def max_step(self, u: np.ndarray, du: np.ndarray) -> float:
        """Largest alpha with u + alpha*du staying in the cone."""
        alpha = np.inf
        if self.p:
            neg = du[:self.p] < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-u[:self.p][neg] / du[:self.p][neg])))
        for i, m in enumerate(self.soc_dims):
            lo = self.offsets[i]
            u0, u1 = u[lo], u[lo + 1:lo + m]
            d0, d1 = du[lo], du[lo + 1:lo + m]
            a = d0 * d0 - d1 @ d1
            b = 2.0 * (u0 * d0 - u1 @ d1)
            cc = u0 * u0 - u1 @ u1
            roots = []
            if abs(a) > 1e-300:
                disc = b * b - 4.0 * a * cc
                if disc >= 0:
                    sq = np.sqrt(disc)
                    roots = [(-b - sq) / (2 * a), (-b + sq) / (2 * a)]
            elif abs(b) > 1e-300:
                roots = [-cc / b]
            pos = [r for r in roots if r > 1e-14]
            if pos:
                alpha = min(alpha, min(pos))
        return alpha

    def jordan_prod(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.dim)
        out[:self.p] = u[:self.p] * v[:self.p]
        for i, m in enumerate(self.soc_dims):
            lo = self.offsets[i]
            ub, vb = u[lo:lo + m], v[lo:lo + m]
            out[lo] = ub @ vb
            out[lo + 1:lo + m] = ub[0] * vb[1:] + vb[0] * ub[1:]
        return out

    def jordan_div(self, lam: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Solve lam o u = d."""
        out = np.empty(self.dim)
        out[:self.p] = d[:self.p] / lam[:self.p]
        for i, m in enumerate(self.soc_dims):
            lo = self.offsets[i]
            l0, l1 = lam[lo], lam[lo + 1:lo + m]
            d0, d1 = d[lo], d[lo + 1:lo + m]
            det = l0 * l0 - l1 @ l1
            u0 = (l0 * d0 - l1 @ d1) / det
            out[lo] = u0
            out[lo + 1:lo + m] = (d1 - u0 * l1) / l0
        return out


class _Breakdown(RuntimeError):
    """Numerical breakdown: iterate left the cone or factorization failed."""


class _Scaling:
    """Nesterov-Todd scaling W with lambda = W z = W^{-1} s."""

    def __init__(self, cone: _Cone, s: np.ndarray, z: np.ndarray):
        self.cone = cone
        if cone.p and (np.any(s[:cone.p] <= 0) or np.any(z[:cone.p] <= 0)):
            raise _Breakdown("orthant iterate left the cone")
        self.w_l = np.sqrt(s[:cone.p] / z[:cone.p]) if cone.p else np.zeros(0)
        self.soc_W: list[np.ndarray] = []
        self.soc_Winv: list[np.ndarray] = []
        for i, m in enumerate(cone.soc_dims):
            lo = cone.offsets[i]
            sb, zb = s[lo:lo + m], z[lo:lo + m]
            J = np.ones(m)
            J[1:] = -1.0
            det_s = sb[0] ** 2 - sb[1:] @ sb[1:]
            det_z = zb[0] ** 2 - zb[1:] @ zb[1:]
            if det_s <= 0 or det_z <= 0:
                raise _Breakdown("cone iterate left the cone")
            aa = np.sqrt(det_s)
            bb = np.sqrt(det_z)
            beta = np.sqrt(aa / bb)
            gamma = np.sqrt((1.0 + (sb @ zb) / (aa * bb)) / 2.0)
            # scaled point, then its Jordan square root (unit hyperbolic norm)
            w = (sb / aa + J * (zb / bb)) / (2.0 * gamma)
            v = w.copy()
            v[0] += 1.0
            v /= np.sqrt(2.0 * v[0])
            H = 2.0 * np.outer(v, v) - np.diag(J)
            self.soc_W.append(beta * H)
            self.soc_Winv.append(np.linalg.inv(beta * H))
        self.lam = self.apply(z)

    def apply(self, u: np.ndarray) -> np.ndarray:
        """W u."""
        out = np.empty(self.cone.dim)
        out[:self.cone.p] = self.w_l * u[:self.cone.p]
        for i, m in enumerate(self.cone.soc_dims):
            lo = self.cone.offsets[i]
            out[lo:lo + m] = self.soc_W[i] @ u[lo:lo + m]
        return out

    def apply_inv(self, u: np.ndarray) -> np.ndarray:
        """W^{-1} u."""
        out = np.empty(self.cone.dim)
        out[:self.cone.p] = u[:self.cone.p] / self.w_l
        for i, m in enumerate(self.cone.soc_dims):
            lo = self.cone.offsets[i]
            out[lo:lo + m] = self.soc_Winv[i] @ u[lo:lo + m]
        return out

    def w2_inv_matrix(self) -> sp.csr_matrix:
        """(W^2)^{-1} as a sparse block-diagonal matrix."""
        mats = []
        if self.cone.p:
            mats.append(sp.diags(1.0 / (self.w_l * self.w_l)))
        for Winv in self.soc_Winv:
            mats.append(sp.csr_matrix(Winv @ Winv))
        if not mats:
            return sp.csr_matrix((0, 0))
        return sp.block_diag(mats, format="csr")


class _Kkt:
    """Factorization of [[Q + G'(W^2)^{-1}G + dI, A'], [A, -dI]]."""

    def __init__(self, problem: ConicProblem, G: sp.csr_matrix, scaling: _Scaling | None):
        nv, ne = problem.num_vars, problem.n_eq
        self.nv, self.ne = nv, ne
        if G.shape[0]:
            Wi2 = scaling.w2_inv_matrix() if scaling else sp.eye(G.shape[0], format="csr")
            H = (G.T @ Wi2 @ G).tocsr()
            self.Wi2 = Wi2
        else:
            H = sp.csr_matrix((nv, nv))
            self.Wi2 = sp.csr_matrix((0, 0))
        top = problem.Q + H
        reg = REG_EPS
        blocks = [[top + reg * sp.eye(nv), problem.A_eq.T if ne else None],
                  [problem.A_eq if ne else None, -reg * sp.eye(ne) if ne else None]]
        if ne:
            M = sp.bmat(blocks, format="csc")
            M0 = sp.bmat([[top, problem.A_eq.T], [problem.A_eq, None]], format="csr")
        else:
            M = (top + reg * sp.eye(nv)).tocsc()
            M0 = top.tocsr()
        self.M0 = M0
        try:
            self.lu = spla.splu(M)
        except RuntimeError as exc:
            raise _Breakdown(f"KKT factorization failed: {exc}") from exc

    def solve(self, rhs_x: np.ndarray, rhs_y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rhs = np.concatenate([rhs_x, rhs_y]) if self.ne else rhs_x
        sol = self.lu.solve(rhs)
        for _ in range(REFINE_STEPS):
            resid = rhs - self.M0 @ sol
            sol = sol + self.lu.solve(resid)
        return sol[:self.nv], sol[self.nv:]


def _stacked_cone_data(problem: ConicProblem):
    G = sp.vstack([problem.G_in, problem.G_soc], format="csr")
    h = np.concatenate([problem.h_in, problem.h_soc])
    cone = _Cone(problem.n_ineq, [b.dim for b in problem.soc_blocks])
    return G, h, cone


def _make_solution(problem: ConicProblem, status: str, x, y, z, s, cone: _Cone,
                   residuals, iterations) -> Solution:
    duals: dict[str, float] = {}
    for i, lbl in enumerate(problem.eq_labels):
        duals[lbl] = float(y[i]) if len(y) else 0.0
    p = problem.n_ineq
    for i, lbl in enumerate(problem.ineq_labels):
        duals[lbl] = float(z[i])
    soc_duals = []
    for i, blk in enumerate(problem.soc_blocks):
        lo = cone.offsets[i]
        zb = z[lo:lo + blk.dim].copy()
        soc_duals.append(zb)
        duals[blk.label] = float(zb[0])
    return Solution(
        status=status, x=x, duals=duals,
        objective_value=problem.objective(x),
        kkt_residuals=residuals, iterations=iterations,
        eq_duals=np.asarray(y, float), ineq_duals=z[:p].copy(),
        soc_duals=soc_duals, slacks=s,
    )


def _solve_equality_only(problem: ConicProblem, options: SolverOptions) -> Solution:
    """Direct KKT solve when the problem has no cone constraints."""
    nv, ne = problem.num_vars, problem.n_eq
    cone = _Cone(0, [])
    if ne:
        M = sp.bmat([[problem.Q + REG_EPS * sp.eye(nv), problem.A_eq.T],
                     [problem.A_eq, -REG_EPS * sp.eye(ne)]], format="csc")
        M0 = sp.bmat([[problem.Q, problem.A_eq.T], [problem.A_eq, None]], format="csr")
        rhs = np.concatenate([-problem.c, problem.b_eq])
        try:
            lu = spla.splu(M)
            sol = lu.solve(rhs)
            for _ in range(REFINE_STEPS):
                sol = sol + lu.solve(rhs - M0 @ sol)
        except RuntimeError:
            sol, *_ = np.linalg.lstsq(M0.toarray(), rhs, rcond=None)
        x, y = sol[:nv], sol[nv:]
    else:
        try:
            lu = spla.splu((problem.Q + REG_EPS * sp.eye(nv)).tocsc())
            x = lu.solve(-problem.c)
        except RuntimeError:
            x, *_ = np.linalg.lstsq(problem.Q.toarray(), -problem.c, rcond=None)
        y = np.zeros(0)
    rx = problem.Q @ x + problem.c + (problem.A_eq.T @ y if ne else 0.0)
    ry = problem.A_eq @ x - problem.b_eq if ne else np.zeros(0)
    pres = float(np.linalg.norm(ry) / max(1.0, np.linalg.norm(problem.b_eq))) if ne else 0.0
    dres = float(np.linalg.norm(rx) / max(1.0, np.linalg.norm(problem.c)))
    if pres > 1e-6:
        status = "infeasible"
    elif dres > 1e-6:
        status = "unbounded"
    else:
        status = "optimal"
    return _make_solution(problem, status, x, y, np.zeros(0), np.zeros(0), cone,
                          (pres, dres, 0.0), 0)


def solve(problem: ConicProblem, options: SolverOptions | None = None) -> Solution:
    """Solve a conic QP; returns primal point and dual multipliers by label."""
    options = options or SolverOptions()
    G, h, cone = _stacked_cone_data(problem)
    if cone.dim == 0:
        return _solve_equality_only(problem, options)

    nv, ne = problem.num_vars, problem.n_eq
    Q, c = problem.Q, problem.c
    A, b = problem.A_eq, problem.b_eq
    norm_b = max(1.0, np.linalg.norm(b)) if ne else 1.0
    norm_h = max(1.0, np.linalg.norm(h))
    norm_c = max(1.0, np.linalg.norm(c))

    # initial point: least-norm-style solve with W = I, then shift into the cone
    kkt0 = _Kkt(problem, G, None)
    x, y = kkt0.solve(-c + G.T @ h, b.copy() if ne else np.zeros(0))
    s_try = h - G @ x
    s = cone.interior_shift(s_try)
    z = cone.interior_shift(-s_try)

    best = None
    best_score = np.inf
    status = "max-iter"
    e = cone.identity()
    iterations = 0

    for it in range(options.max_iter):
        iterations = it
        rx = Q @ x + c + (A.T @ y if ne else 0.0) + G.T @ z
        ry = (A @ x - b) if ne else np.zeros(0)
        rz = G @ x + s - h
        gap = float(s @ z)
        mu = gap / cone.degree
        pcost = problem.objective(x)

        pres = max(
            float(np.linalg.norm(ry)) / norm_b if ne else 0.0,
            float(np.linalg.norm(rz)) / norm_h,
        )
        dres = float(np.linalg.norm(rx)) / norm_c
        relgap = gap / max(1.0, abs(pcost))
        score = max(pres, dres, relgap * options.tol / options.gap)
        if score < best_score:
            best_score = score
            best = (x.copy(), y.copy(), z.copy(), s.copy(), (pres, dres, relgap))
        if options.verbose:
            print(f"iter {it:3d}  pres {pres:9.2e}  dres {dres:9.2e}  gap {relgap:9.2e}")

        if pres <= options.tol and dres <= options.tol and relgap <= options.gap:
            status = "optimal"
            break

        # primal-infeasibility certificate: A'y + G'z = 0, b'y + h'z < 0, z in K*
        cert = float((b @ y if ne else 0.0) + h @ z)
        atygz = float(np.linalg.norm((A.T @ y if ne else 0.0) + G.T @ z))
        zy_scale = max(1.0, float(np.linalg.norm(z)) + (float(np.linalg.norm(y)) if ne else 0.0))
        if cert < -1e-2 * zy_scale and atygz <= 1e-8 * zy_scale:
            status = "infeasible"
            break
        # dual-infeasibility (primal unbounded) heuristic
        if pcost < -1e12 and pres <= 1e-6:
            status = "unbounded"
            break

        try:
            scaling = _Scaling(cone, s, z)
            lam = scaling.lam
            kkt = _Kkt(problem, G, scaling)

            def direction(dc):
                tmp = scaling.apply(cone.jordan_div(lam, dc))
                rhs_x = -rx - G.T @ (kkt.Wi2 @ (rz + tmp))
                dx, dy = kkt.solve(rhs_x, -ry if ne else np.zeros(0))
                dz = kkt.Wi2 @ (G @ dx + rz + tmp)
                ds = -rz - G @ dx
                return dx, dy, dz, ds

            # predictor
            dc_aff = -cone.jordan_prod(lam, lam)
            dx_a, dy_a, dz_a, ds_a = direction(dc_aff)
            alpha_aff = min(1.0, cone.max_step(s, ds_a), cone.max_step(z, dz_a))
            gap_aff = float((s + alpha_aff * ds_a) @ (z + alpha_aff * dz_a))
            sigma = min(1.0, max(0.0, gap_aff / gap)) ** 3

            # corrector
            eta = cone.jordan_prod(scaling.apply_inv(ds_a), scaling.apply(dz_a))
            dc = dc_aff - eta + sigma * mu * e
            dx, dy, dz, ds = direction(dc)
            alpha = min(1.0, STEP_FRACTION * cone.max_step(s, ds),
                        STEP_FRACTION * cone.max_step(z, dz))
            if alpha < 1e-7:
                # step collapsed: retry with a pure centering direction
                dx, dy, dz, ds = direction(dc_aff + mu * e)
                alpha = min(1.0, STEP_FRACTION * cone.max_step(s, ds),
                            STEP_FRACTION * cone.max_step(z, dz))
        except _Breakdown:
            break
        if not np.isfinite(alpha) or alpha <= 1e-10:
            break
        x = x + alpha * dx
        if ne:
            y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds

    if status in ("optimal", "infeasible", "unbounded"):
        return _make_solution(problem, status, x, y, z, s, cone,
                              (pres, dres, relgap), iterations)
    # stalled or out of iterations: grade the best iterate honestly
    xb, yb, zb, sb, res = best
    final = "optimal" if best_score <= options.tol else "max-iter"
    return _make_solution(problem, final, xb, yb, zb, sb, cone, res, iterations)
