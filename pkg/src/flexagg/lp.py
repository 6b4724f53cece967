"""Linear-program container, builder and solver front end.

Every aggregation and disaggregation model in the package reduces to an LP.
Callers build a :class:`LinearProgram` through :class:`LPBuilder` and hand it
to :func:`solve`; the backend (the bundled revised simplex or HiGHS through
SciPy) is picked by name so that callers never depend on a specific solver.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

FEAS_TOL = 1e-7
OPT_TOL = 1e-9

LE, EQ, GE = "L", "E", "G"

DEFAULT_BACKEND = "highs"


class LPError(Exception):
    """Base class for LP errors."""


class LPDimensionError(LPError, ValueError):
    """Inconsistent row/column dimensions or NaN data."""


class LPNumericalError(LPError, ArithmeticError):
    """The solver broke down numerically; distinct from infeasibility."""


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LinearProgram:
    """``min/max c @ x`` subject to ``A x (sense) rhs`` and ``lb <= x <= ub``.

    ``sense`` holds one of ``"L"`` (<=), ``"E"`` (=), ``"G"`` (>=) per row.
    Bounds may be infinite.
    """

    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    maximize: bool = False

    def __post_init__(self):
        n = self.c.shape[0]
        m = self.rhs.shape[0]
        if self.A.shape != (m, n):
            raise LPDimensionError(f"A has shape {self.A.shape}, expected {(m, n)}")
        if self.sense.shape != (m,):
            raise LPDimensionError("sense length does not match row count")
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise LPDimensionError("bound vectors do not match variable count")
        if not set(np.unique(self.sense)) <= {LE, EQ, GE}:
            raise LPDimensionError("sense entries must be 'L', 'E' or 'G'")
        for name in ("c", "rhs", "lb", "ub"):
            if np.isnan(getattr(self, name)).any():
                raise LPDimensionError(f"NaN in {name}")
        if np.isnan(self.A.data).any():
            raise LPDimensionError("NaN in constraint matrix")
        if np.isinf(self.rhs).any() or np.isinf(self.c).any():
            raise LPDimensionError("infinite rhs or objective coefficient")
        if (self.lb > self.ub).any():
            raise LPDimensionError("lower bound above upper bound")

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @property
    def n_rows(self) -> int:
        return self.rhs.shape[0]

    def row_residuals(self, x: np.ndarray) -> np.ndarray:
        """Per-row constraint violation (>= 0) at ``x``."""
        ax = self.A @ x
        res = np.zeros(self.n_rows)
        le = self.sense == LE
        ge = self.sense == GE
        eq = self.sense == EQ
        res[le] = np.maximum(ax[le] - self.rhs[le], 0.0)
        res[ge] = np.maximum(self.rhs[ge] - ax[ge], 0.0)
        res[eq] = np.abs(ax[eq] - self.rhs[eq])
        return res

    def max_violation(self, x: np.ndarray) -> float:
        """Largest row or bound violation at ``x``."""
        bound = np.maximum(self.lb - x, 0.0).max(initial=0.0)
        bound = max(bound, np.maximum(x - self.ub, 0.0).max(initial=0.0))
        return float(max(self.row_residuals(x).max(initial=0.0), bound))


@dataclass
class LpOutcome:
    status: Status
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    duals: Optional[np.ndarray] = None
    dual_objective: Optional[float] = None
    iterations: int = 0
    # sum of artificial values left after phase 1 when infeasible
    infeasibility: Optional[float] = None
    backend: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class LPBuilder:
    """Incrementally assemble a :class:`LinearProgram`.

    Variables are added in blocks and addressed by integer index; rows are
    stored as COO triplets so that whole sparse blocks can be stamped in at
    an offset.
    """

    def __init__(self):
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._c: dict[int, float] = {}
        self.n_vars = 0
        self.n_rows = 0
        self._ri: list[np.ndarray] = []
        self._ci: list[np.ndarray] = []
        self._v: list[np.ndarray] = []
        self._sense: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []

    def add_vars(self, n: int, lb=-np.inf, ub=np.inf) -> np.ndarray:
        lb = np.broadcast_to(np.asarray(lb, dtype=float), (n,)).copy()
        ub = np.broadcast_to(np.asarray(ub, dtype=float), (n,)).copy()
        self._lb.append(lb)
        self._ub.append(ub)
        idx = np.arange(self.n_vars, self.n_vars + n)
        self.n_vars += n
        return idx

    def add_var(self, lb=-np.inf, ub=np.inf) -> int:
        return int(self.add_vars(1, lb, ub)[0])

    def add_row(self, cols: Sequence[int], coefs: Sequence[float], sense: str, rhs: float) -> int:
        cols = np.asarray(cols, dtype=np.int64)
        coefs = np.asarray(coefs, dtype=float)
        if cols.shape != coefs.shape:
            raise LPDimensionError("row columns and coefficients differ in length")
        self._ri.append(np.full(cols.shape, self.n_rows, dtype=np.int64))
        self._ci.append(cols)
        self._v.append(coefs)
        self._sense.append(np.array([sense]))
        self._rhs.append(np.array([float(rhs)]))
        self.n_rows += 1
        return self.n_rows - 1

    def add_range(self, cols, coefs, lo: float, hi: float):
        """Add ``lo <= row <= hi`` (as one or two rows, skipping infinite sides)."""
        if lo == hi:
            self.add_row(cols, coefs, EQ, lo)
            return
        if np.isfinite(lo):
            self.add_row(cols, coefs, GE, lo)
        if np.isfinite(hi):
            self.add_row(cols, coefs, LE, hi)

    def add_block(self, A: sp.spmatrix, col_offset: int, sense: np.ndarray, rhs: np.ndarray):
        """Stamp a sparse row block whose columns start at ``col_offset``."""
        coo = A.tocoo()
        self._ri.append(coo.row.astype(np.int64) + self.n_rows)
        self._ci.append(coo.col.astype(np.int64) + col_offset)
        self._v.append(coo.data.astype(float))
        self._sense.append(np.asarray(sense))
        self._rhs.append(np.asarray(rhs, dtype=float))
        self.n_rows += A.shape[0]

    def set_rhs(self, row: int, rhs: float):
        """Change the right-hand side of a row added with :meth:`add_row`."""
        for blk, arr in enumerate(self._rhs):
            if row < arr.size:
                if arr.size != 1:
                    raise LPDimensionError("set_rhs only applies to single rows")
                self._rhs[blk] = np.array([float(rhs)])
                return
            row -= arr.size
        raise LPDimensionError(f"row {row} out of range")

    def add_objective(self, cols, coefs):
        for j, v in zip(np.atleast_1d(cols), np.atleast_1d(coefs)):
            self._c[int(j)] = self._c.get(int(j), 0.0) + float(v)

    def clear_objective(self):
        self._c = {}

    def bound(self, j: int, lb=None, ub=None):
        """Tighten bounds of an existing variable."""
        pos, blk = self._locate(j)
        if lb is not None:
            self._lb[blk][pos] = lb
        if ub is not None:
            self._ub[blk][pos] = ub

    def _locate(self, j):
        start = 0
        for blk, arr in enumerate(self._lb):
            if j < start + len(arr):
                return j - start, blk
            start += len(arr)
        raise IndexError(j)

    def build(self, maximize: bool = False) -> LinearProgram:
        n, m = self.n_vars, self.n_rows
        c = np.zeros(n)
        for j, v in self._c.items():
            c[j] = v
        if self._ri:
            rows = np.concatenate(self._ri)
            cols = np.concatenate(self._ci)
            vals = np.concatenate(self._v)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
        A.sum_duplicates()
        sense = np.concatenate(self._sense) if self._sense else np.zeros(0, dtype="<U1")
        rhs = np.concatenate(self._rhs) if self._rhs else np.zeros(0)
        lb = np.concatenate(self._lb) if self._lb else np.zeros(0)
        ub = np.concatenate(self._ub) if self._ub else np.zeros(0)
        return LinearProgram(c, A, sense.astype("<U1"), rhs, lb, ub, maximize)


def solve(lp: LinearProgram, backend: Optional[str] = None) -> LpOutcome:
    """Solve ``lp`` with the named backend (``"highs"`` or ``"simplex"``).

    Raises:
        LPNumericalError: the backend reported a numerical failure or an
            "optimal" point violating the rows by more than ``FEAS_TOL``.
    """
    backend = backend or DEFAULT_BACKEND
    if backend == "simplex":
        from .simplex import solve_simplex

        out = solve_simplex(lp)
    elif backend == "highs":
        out = _solve_highs(lp)
    else:
        raise ValueError(f"unknown LP backend {backend!r}")
    if out.optimal:
        viol = lp.max_violation(out.x)
        if viol > FEAS_TOL:
            raise LPNumericalError(f"{backend}: optimal point violates constraints by {viol:.3g}")
    return out


def check_feasible(lp: LinearProgram, backend: Optional[str] = None) -> bool:
    """Phase-1 style check: True iff some point satisfies every row."""
    zero = LinearProgram(np.zeros(lp.n_vars), lp.A, lp.sense, lp.rhs, lp.lb, lp.ub, False)
    out = solve(zero, backend)
    return out.status is not Status.INFEASIBLE


def _solve_highs(lp: LinearProgram) -> LpOutcome:
    c = -lp.c if lp.maximize else lp.c
    le = lp.sense == LE
    ge = lp.sense == GE
    eq = lp.sense == EQ
    ub_rows = le | ge
    A_ub = b_ub = A_eq = b_eq = None
    if ub_rows.any():
        sign = np.where(ge[ub_rows], -1.0, 1.0)
        A_ub = sp.diags(sign) @ lp.A[ub_rows]
        b_ub = sign * lp.rhs[ub_rows]
    if eq.any():
        A_eq = lp.A[eq]
        b_eq = lp.rhs[eq]
    bounds = np.column_stack([lp.lb, lp.ub])
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9},
    )
    if res.status == 2:
        # presolve may report "infeasible" for an infeasible-or-unbounded model
        if np.any(c != 0) and check_feasible(lp, "highs"):
            return LpOutcome(Status.UNBOUNDED, backend="highs", iterations=int(res.nit))
        return LpOutcome(Status.INFEASIBLE, backend="highs", iterations=int(res.nit))
    if res.status == 3:
        return LpOutcome(Status.UNBOUNDED, backend="highs", iterations=int(res.nit))
    if res.status != 0:
        raise LPNumericalError(f"highs failed: {res.message}")
    x = np.asarray(res.x, dtype=float)
    obj = float(lp.c @ x)
    duals = np.zeros(lp.n_rows)
    if ub_rows.any():
        duals[ub_rows] = np.asarray(res.ineqlin.marginals) * np.where(ge[ub_rows], -1.0, 1.0)
    if eq.any():
        duals[eq] = np.asarray(res.eqlin.marginals)
    # dual objective of the min-form problem, sign-adjusted back
    red = c - lp.A.T @ duals
    bound_term = np.where(red > 0, red * np.where(np.isfinite(lp.lb), lp.lb, 0.0),
                          red * np.where(np.isfinite(lp.ub), lp.ub, 0.0))
    dual_obj = float(lp.rhs @ duals + bound_term.sum())
    if lp.maximize:
        dual_obj = -dual_obj
        duals = -duals
    return LpOutcome(Status.OPTIMAL, x, obj, duals, dual_obj, int(res.nit), backend="highs")


def write_lp(lp: LinearProgram, path, names: Optional[Sequence[str]] = None) -> None:
    """Export ``lp`` in CPLEX LP text format for cross-checks with other solvers."""
    names = list(names) if names is not None else [f"x{j}" for j in range(lp.n_vars)]

    def terms(idx, vals):
        out = []
        for j, v in zip(idx, vals):
            if v == 0:
                continue
            sign = "-" if v < 0 else "+"
            out.append(f"{sign} {abs(v):.12g} {names[j]}")
        if not out:
            return "0 " + names[0] if names else "0"
        s = " ".join(out)
        return s[2:] if s.startswith("+ ") else s

    nz = np.flatnonzero(lp.c)
    lines = ["Maximize" if lp.maximize else "Minimize", " obj: " + terms(nz, lp.c[nz]), "Subject To"]
    A = lp.A.tocsr()
    op = {LE: "<=", GE: ">=", EQ: "="}
    for i in range(lp.n_rows):
        row = A.getrow(i)
        lines.append(f" c{i}: {terms(row.indices, row.data)} {op[lp.sense[i]]} {lp.rhs[i]:.12g}")
    lines.append("Bounds")
    for j in range(lp.n_vars):
        lo, hi = lp.lb[j], lp.ub[j]
        if np.isinf(lo) and np.isinf(hi):
            lines.append(f" {names[j]} free")
        elif lo == hi:
            lines.append(f" {names[j]} = {lo:.12g}")
        else:
            lo_s = "-inf" if np.isinf(lo) else f"{lo:.12g}"
            hi_s = "+inf" if np.isinf(hi) else f"{hi:.12g}"
            lines.append(f" {lo_s} <= {names[j]} <= {hi_s}")
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
