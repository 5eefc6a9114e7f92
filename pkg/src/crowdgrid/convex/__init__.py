"""Generic convex solver: QP objective, linear constraints, second-order cones."""

from .kkt import KktReport, verify_kkt
from .problem import (BRANCH_FLOW_TAG, ConicProblem, ProblemBuilder,
                      ProblemError, SocBlock, dump_problem,
                      linearize_socp_to_qp, load_problem)
from .solver import Solution, SolverOptions, solve

__all__ = [
    "BRANCH_FLOW_TAG", "ConicProblem", "ProblemBuilder", "ProblemError",
    "SocBlock", "linearize_socp_to_qp", "Solution", "SolverOptions",
    "solve", "KktReport", "verify_kkt", "dump_problem", "load_problem",
]
