"""Conic quadratic program container and incremental builder.

Canonical form:

    minimize    (1/2) x'Qx + c'x + k
    subject to  A x  = b                          (labeled equality rows)
                G x <= h                          (labeled inequality rows)
                ||F x + d|| <= g'x + e            (labeled second-order cones)

Every constraint carries a unique label so dual multipliers can be
retrieved by name after a solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

BRANCH_FLOW_TAG = "branch-flow"


class ProblemError(ValueError):
    """Inconsistent problem data."""


@dataclass
class SocBlock:
    """One second-order cone ||F x + d|| <= g'x + e.

    ``loss_var`` marks branch-flow relaxation cones with the index of the
    squared-current variable they bound (used by the LinDistFlow transform).
    """

    dim: int  # 1 + number of rows of F
    label: str
    tag: str | None = None
    loss_var: int | None = None


@dataclass
class ConicProblem:
    num_vars: int
    Q: sp.csr_matrix  # symmetric PSD
    c: np.ndarray
    constant: float
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    eq_labels: tuple[str, ...]
    G_in: sp.csr_matrix
    h_in: np.ndarray
    ineq_labels: tuple[str, ...]
    # cone rows stacked as [-g; -F] per block so that slack = (g'x+e, Fx+d)
    G_soc: sp.csr_matrix
    h_soc: np.ndarray
    soc_blocks: tuple[SocBlock, ...]

    def __post_init__(self):
        nv = self.num_vars
        for name, mat in (("Q", self.Q), ("A_eq", self.A_eq),
                          ("G_in", self.G_in), ("G_soc", self.G_soc)):
            if mat.shape[1] != nv:
                raise ProblemError(f"{name} has {mat.shape[1]} columns, want {nv}")
        if self.A_eq.shape[0] != len(self.b_eq) or len(self.b_eq) != len(self.eq_labels):
            raise ProblemError("equality rows, rhs and labels disagree")
        if self.G_in.shape[0] != len(self.h_in) or len(self.h_in) != len(self.ineq_labels):
            raise ProblemError("inequality rows, rhs and labels disagree")
        if self.G_soc.shape[0] != sum(b.dim for b in self.soc_blocks):
            raise ProblemError("cone rows do not match block dimensions")
        labels = list(self.eq_labels) + list(self.ineq_labels) + [b.label for b in self.soc_blocks]
        if len(set(labels)) != len(labels):
            raise ProblemError("constraint labels must be unique")
        _check_psd(self.Q)

    @property
    def n_eq(self) -> int:
        return self.A_eq.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.G_in.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.Q @ x) + self.c @ x + self.constant)


def _check_psd(Q: sp.csr_matrix) -> None:
    d = Q - Q.T
    if d.nnz and np.max(np.abs(d.data)) > 1e-9 * max(1.0, abs(Q).max()):
        raise ProblemError("Q must be symmetric")
    if Q.shape[0] == 0 or Q.nnz == 0:
        return
    diag = Q.diagonal()
    if np.any(diag < -1e-12):
        raise ProblemError("Q has a negative diagonal entry (not PSD)")
    off = Q - sp.diags(diag)
    if off.nnz == 0:
        return  # diagonal with nonnegative entries
    if Q.shape[0] <= 2000:
        dense = Q.toarray()
        try:
            np.linalg.cholesky(dense + 1e-10 * max(1.0, diag.max()) * np.eye(Q.shape[0]))
        except np.linalg.LinAlgError:
            raise ProblemError("Q failed the PSD factorization check") from None
    # large non-diagonal Q is not produced by the builders in this package


class ProblemBuilder:
    """Accumulates variables/constraints and freezes into a ConicProblem."""

    def __init__(self):
        self._nv = 0
        self._names: list[str] = []
        self._q: dict[tuple[int, int], float] = {}
        self._c: dict[int, float] = {}
        self._k = 0.0
        self._eq_rows: list[dict[int, float]] = []
        self._eq_rhs: list[float] = []
        self._eq_labels: list[str] = []
        self._in_rows: list[dict[int, float]] = []
        self._in_rhs: list[float] = []
        self._in_labels: list[str] = []
        self._soc_rows: list[dict[int, float]] = []
        self._soc_rhs: list[float] = []
        self._soc_blocks: list[SocBlock] = []
        self._labels: set[str] = set()

    # -- variables ---------------------------------------------------------
    def new_var(self, name: str, lb: float | None = None, ub: float | None = None) -> int:
        """Register a variable; optional bounds become labeled inequality rows."""
        idx = self._nv
        self._nv += 1
        self._names.append(name)
        if lb is not None and ub is not None and lb > ub:
            raise ProblemError(f"variable {name}: lb {lb} > ub {ub}")
        if lb is not None and lb == ub:
            self.add_eq({idx: 1.0}, lb, f"pin:{name}")
        else:
            if lb is not None:
                self.add_ineq({idx: -1.0}, -lb, f"lb:{name}")
            if ub is not None:
                self.add_ineq({idx: 1.0}, ub, f"ub:{name}")
        return idx

    def var_name(self, idx: int) -> str:
        return self._names[idx]

    @property
    def num_vars(self) -> int:
        return self._nv

    # -- objective ---------------------------------------------------------
    def add_quad_cost(self, idx: int, coeff: float) -> None:
        """Add coeff * x_idx^2 to the objective (coeff >= 0)."""
        if coeff < 0:
            raise ProblemError("quadratic cost coefficients must be >= 0")
        self._q[(idx, idx)] = self._q.get((idx, idx), 0.0) + 2.0 * coeff

    def add_lin_cost(self, idx: int, coeff: float) -> None:
        self._c[idx] = self._c.get(idx, 0.0) + coeff

    def add_const_cost(self, value: float) -> None:
        self._k += value

    # -- constraints -------------------------------------------------------
    def _take_label(self, label: str) -> None:
        if label in self._labels:
            raise ProblemError(f"duplicate constraint label {label!r}")
        self._labels.add(label)

    def add_eq(self, coeffs: dict[int, float], rhs: float, label: str) -> None:
        self._take_label(label)
        self._eq_rows.append(coeffs)
        self._eq_rhs.append(rhs)
        self._eq_labels.append(label)

    def add_ineq(self, coeffs: dict[int, float], rhs: float, label: str) -> None:
        """a'x <= rhs."""
        self._take_label(label)
        self._in_rows.append(coeffs)
        self._in_rhs.append(rhs)
        self._in_labels.append(label)

    def pin(self, idx: int, value: float, label: str) -> None:
        self.add_eq({idx: 1.0}, value, label)

    def add_soc(self, f_rows: list[dict[int, float]], f_consts: list[float],
                g_row: dict[int, float], g_const: float, label: str,
                tag: str | None = None, loss_var: int | None = None) -> None:
        """Add ||F x + d|| <= g'x + e with F rows/consts and (g, e)."""
        if len(f_rows) != len(f_consts):
            raise ProblemError("cone rows and constants disagree")
        self._take_label(label)
        self._soc_rows.append({k: -v for k, v in g_row.items()})
        self._soc_rhs.append(g_const)
        for row, const in zip(f_rows, f_consts):
            self._soc_rows.append({k: -v for k, v in row.items()})
            self._soc_rhs.append(const)
        self._soc_blocks.append(SocBlock(dim=1 + len(f_rows), label=label,
                                         tag=tag, loss_var=loss_var))

    # -- freeze --------------------------------------------------------------
    def _stack(self, rows: list[dict[int, float]]) -> sp.csr_matrix:
        data, ri, ci = [], [], []
        for i, row in enumerate(rows):
            for j, v in row.items():
                if v != 0.0:
                    ri.append(i)
                    ci.append(j)
                    data.append(v)
        return sp.csr_matrix((data, (ri, ci)), shape=(len(rows), self._nv))

    def build(self) -> ConicProblem:
        qd, qr, qc = [], [], []
        for (i, j), v in sorted(self._q.items()):
            qr.append(i)
            qc.append(j)
            qd.append(v)
        Q = sp.csr_matrix((qd, (qr, qc)), shape=(self._nv, self._nv))
        c = np.zeros(self._nv)
        for i, v in self._c.items():
            c[i] += v
        return ConicProblem(
            num_vars=self._nv, Q=Q, c=c, constant=self._k,
            A_eq=self._stack(self._eq_rows), b_eq=np.asarray(self._eq_rhs, float),
            eq_labels=tuple(self._eq_labels),
            G_in=self._stack(self._in_rows), h_in=np.asarray(self._in_rhs, float),
            ineq_labels=tuple(self._in_labels),
            G_soc=self._stack(self._soc_rows), h_soc=np.asarray(self._soc_rhs, float),
            soc_blocks=tuple(self._soc_blocks),
        )


def linearize_socp_to_qp(problem: ConicProblem) -> ConicProblem:
    """Drop branch-flow relaxation cones and pin their loss variables to zero.

    This is the LinDistFlow approximation: the resulting problem is a plain
    QP.  Cones lacking the branch-flow tag cannot be linearized and raise.
    """
    if not problem.soc_blocks:
        return problem
    bad = [b.label for b in problem.soc_blocks
           if b.tag != BRANCH_FLOW_TAG or b.loss_var is None]
    if bad:
        raise ProblemError(f"cones not tagged as branch-flow relaxations: {bad}")
    extra_rows = []
    extra_rhs = []
    extra_labels = []
    for blk in problem.soc_blocks:
        row = np.zeros(problem.num_vars)
        row[blk.loss_var] = 1.0
        extra_rows.append(sp.csr_matrix(row))
        extra_rhs.append(0.0)
        extra_labels.append(f"lindist:{blk.label}")
    A_eq = sp.vstack([problem.A_eq] + extra_rows, format="csr")
    return ConicProblem(
        num_vars=problem.num_vars, Q=problem.Q, c=problem.c, constant=problem.constant,
        A_eq=A_eq, b_eq=np.concatenate([problem.b_eq, extra_rhs]),
        eq_labels=problem.eq_labels + tuple(extra_labels),
        G_in=problem.G_in, h_in=problem.h_in, ineq_labels=problem.ineq_labels,
        G_soc=sp.csr_matrix((0, problem.num_vars)), h_soc=np.zeros(0),
        soc_blocks=(),
    )


# -- plain-text dump/load (debugging and oracle cross-checks) -----------------

def dump_problem(problem: ConicProblem) -> str:
    """Line-oriented text serialization; not a stable public format."""
    out = ["conicqp 1", f"nvars {problem.num_vars}",
           f"constant {problem.constant!r}"]

    def mat(tag, m):
        coo = m.tocoo()
        out.append(f"{tag} {coo.nnz}")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            out.append(f"{i} {j} {v!r}")

    mat("Q", problem.Q)
    nz = np.nonzero(problem.c)[0]
    out.append(f"c {len(nz)}")
    for j in nz:
        out.append(f"{j} {problem.c[j]!r}")

    for tag, A, b, labels in (("eq", problem.A_eq, problem.b_eq, problem.eq_labels),
                              ("ineq", problem.G_in, problem.h_in, problem.ineq_labels)):
        out.append(f"{tag} {len(labels)}")
        csr = A.tocsr()
        for i, lbl in enumerate(labels):
            lo, hi = csr.indptr[i], csr.indptr[i + 1]
            out.append(f"row {lbl} {b[i]!r} {hi - lo}")
            for j, v in zip(csr.indices[lo:hi], csr.data[lo:hi]):
                out.append(f"{j} {v!r}")

    out.append(f"soc {len(problem.soc_blocks)}")
    csr = problem.G_soc.tocsr()
    offset = 0
    for blk in problem.soc_blocks:
        out.append(f"block {blk.label} {blk.dim} {blk.tag or '-'} "
                   f"{blk.loss_var if blk.loss_var is not None else '-'}")
        for r in range(offset, offset + blk.dim):
            lo, hi = csr.indptr[r], csr.indptr[r + 1]
            out.append(f"row {problem.h_soc[r]!r} {hi - lo}")
            for j, v in zip(csr.indices[lo:hi], csr.data[lo:hi]):
                out.append(f"{j} {v!r}")
        offset += blk.dim
    return "\n".join(out) + "\n"


def load_problem(text: str) -> ConicProblem:
    """Inverse of :func:`dump_problem`."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines[0].split() != ["conicqp", "1"]:
        raise ProblemError("not a conicqp dump")
    pos = [1]

    def take():
        ln = lines[pos[0]]
        pos[0] += 1
        return ln.split()

    nvars = int(take()[1])
    constant = float(take()[1])

    def read_mat(expect):
        head = take()
        assert head[0] == expect
        data, ri, ci = [], [], []
        for _ in range(int(head[1])):
            i, j, v = take()
            ri.append(int(i))
            ci.append(int(j))
            data.append(float(v))
        return sp.csr_matrix((data, (ri, ci)), shape=(nvars, nvars))

    Q = read_mat("Q")
    head = take()
    assert head[0] == "c"
    c = np.zeros(nvars)
    for _ in range(int(head[1])):
        j, v = take()
        c[int(j)] = float(v)

    def read_rows(expect):
        head = take()
        assert head[0] == expect
        rows, rhs, labels = [], [], []
        for _ in range(int(head[1])):
            _, lbl, b, nnz = take()
            labels.append(lbl)
            rhs.append(float(b))
            row = {}
            for _ in range(int(nnz)):
                j, v = take()
                row[int(j)] = float(v)
            rows.append(row)
        data, ri, ci = [], [], []
        for i, row in enumerate(rows):
            for j, v in row.items():
                ri.append(i)
                ci.append(j)
                data.append(v)
        return (sp.csr_matrix((data, (ri, ci)), shape=(len(rows), nvars)),
                np.asarray(rhs), tuple(labels))

    A_eq, b_eq, eq_labels = read_rows("eq")
    G_in, h_in, in_labels = read_rows("ineq")

    head = take()
    assert head[0] == "soc"
    blocks = []
    data, ri, ci, h_soc = [], [], [], []
    row_at = 0
    for _ in range(int(head[1])):
        _, lbl, dim, tag, loss = take()
        blocks.append(SocBlock(dim=int(dim), label=lbl,
                               tag=None if tag == "-" else tag,
                               loss_var=None if loss == "-" else int(loss)))
        for _ in range(int(dim)):
            _, b, nnz = take()
            h_soc.append(float(b))
            for _ in range(int(nnz)):
                j, v = take()
                ri.append(row_at)
                ci.append(int(j))
                data.append(float(v))
            row_at += 1
    G_soc = sp.csr_matrix((data, (ri, ci)), shape=(row_at, nvars))
    return ConicProblem(num_vars=nvars, Q=Q, c=c, constant=constant,
                        A_eq=A_eq, b_eq=b_eq, eq_labels=eq_labels,
                        G_in=G_in, h_in=h_in, ineq_labels=in_labels,
                        G_soc=G_soc, h_soc=np.asarray(h_soc), soc_blocks=tuple(blocks))
