"""Independent KKT verification of solver output.

Recomputes stationarity, primal/dual feasibility and complementary
slackness directly from the problem data; shares no state with the
interior-point iteration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import ConicProblem
from .solver import Solution


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    def max_residual(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementarity)

    def within(self, tol: float) -> bool:
        return self.max_residual() <= tol


def verify_kkt(problem: ConicProblem, solution: Solution) -> KktReport:
    """Residual report for a claimed optimal point and its multipliers."""
    x = solution.x
    y = solution.eq_duals
    z_l = solution.ineq_duals

    # stationarity: Qx + c + A'y + G_in'z + sum_k G_soc,k' z_k
    grad = problem.Q @ x + problem.c
    if problem.n_eq:
        grad = grad + problem.A_eq.T @ y
    if problem.n_ineq:
        grad = grad + problem.G_in.T @ z_l
    if problem.soc_blocks:
        z_soc = np.concatenate(solution.soc_duals)
        grad = grad + problem.G_soc.T @ z_soc
    stationarity = float(np.max(np.abs(grad))) if len(grad) else 0.0

    # primal feasibility
    primal = 0.0
    if problem.n_eq:
        primal = max(primal, float(np.max(np.abs(problem.A_eq @ x - problem.b_eq))))
    slack_l = problem.h_in - problem.G_in @ x if problem.n_ineq else np.zeros(0)
    if problem.n_ineq:
        primal = max(primal, float(np.max(np.maximum(-slack_l, 0.0))))
    soc_slacks = []
    if problem.soc_blocks:
        stacked = problem.h_soc - problem.G_soc @ x
        lo = 0
        for blk in problem.soc_blocks:
            sb = stacked[lo:lo + blk.dim]
            lo += blk.dim
            soc_slacks.append(sb)
            primal = max(primal, float(np.linalg.norm(sb[1:]) - sb[0]))

    # dual feasibility: orthant multipliers >= 0, cone multipliers in the cone
    dual = 0.0
    if problem.n_ineq:
        dual = max(dual, float(np.max(np.maximum(-z_l, 0.0))))
    for zb in solution.soc_duals:
        dual = max(dual, float(np.linalg.norm(zb[1:]) - zb[0]))

    # complementary slackness
    comp = 0.0
    if problem.n_ineq:
        comp = max(comp, float(np.max(np.abs(z_l * slack_l))))
    for sb, zb in zip(soc_slacks, solution.soc_duals):
        comp = max(comp, abs(float(sb @ zb)))

    return KktReport(stationarity=stationarity, primal=primal,
                     dual=max(dual, 0.0), complementarity=comp)
