"""Dense bounded-variable revised simplex.

Two phases with one artificial per row. Pricing is Dantzig's rule with ties
broken by lowest index; after a run of degenerate pivots the solver switches
to Bland's rule until it makes progress again, which rules out cycling.
The basis inverse is kept explicitly and refactored periodically.

Adequate for desk-scale LPs (a few hundred rows); large models should go
through the HiGHS backend.
"""

from __future__ import annotations

import numpy as np

from .lp import EQ, FEAS_TOL, LE, OPT_TOL, LinearProgram, LPNumericalError, LpOutcome, Status

PIVOT_TOL = 1e-11
REFACTOR_EVERY = 50
DEGENERATE_RUN = 30


class _Tableau:
    def __init__(self, A, rhs, lb, ub, x, basis, Binv):
        self.A = A
        self.rhs = rhs
        self.lb = lb
        self.ub = ub
        self.x = x
        self.basis = basis
        self.Binv = Binv
        self.iterations = 0

    def refactor(self):
        B = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise LPNumericalError("singular basis during refactorization") from exc
        nonbasic = np.ones(self.A.shape[1], dtype=bool)
        nonbasic[self.basis] = False
        r = self.rhs - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ r

    def run(self, cost: np.ndarray, max_iter: int) -> Status:
        A, lb, ub, x = self.A, self.lb, self.ub, self.x
        n_total = A.shape[1]
        degenerate = 0
        since_refactor = REFACTOR_EVERY
        while True:
            if self.iterations >= max_iter:
                raise LPNumericalError(f"simplex iteration limit {max_iter} reached")
            if since_refactor >= REFACTOR_EVERY:
                self.refactor()
                since_refactor = 0
            since_refactor += 1
            basis = self.basis
            y = cost[basis] @ self.Binv
            d = cost - y @ A
            nonbasic = np.ones(n_total, dtype=bool)
            nonbasic[basis] = False
            can_inc = nonbasic & (x < ub - FEAS_TOL) & (d < -OPT_TOL)
            can_dec = nonbasic & (x > lb + FEAS_TOL) & (d > OPT_TOL)
            eligible = can_inc | can_dec
            if not eligible.any():
                return Status.OPTIMAL
            bland = degenerate >= DEGENERATE_RUN
            cand = np.flatnonzero(eligible)
            if bland:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if can_inc[j] else -1.0
            w = self.Binv @ A[:, j]
            rate = -direction * w
            xb = x[basis]
            limits = np.full(len(basis), np.inf)
            dec = rate < -PIVOT_TOL
            inc = rate > PIVOT_TOL
            limits[dec] = (xb[dec] - lb[basis][dec]) / -rate[dec]
            limits[inc] = (ub[basis][inc] - xb[inc]) / rate[inc]
            limits = np.maximum(limits, 0.0)
            theta_row = limits.min() if len(limits) else np.inf
            theta_flip = ub[j] - lb[j]
            if not np.isfinite(theta_row) and not np.isfinite(theta_flip):
                return Status.UNBOUNDED
            self.iterations += 1
            if theta_flip <= theta_row:
                theta = theta_flip
                x[j] += direction * theta
                x[basis] = xb + theta * rate
                degenerate = 0
                continue
            theta = theta_row
            ties = np.flatnonzero(limits <= theta + 1e-12)
            if bland:
                r = int(ties[np.argmin(basis[ties])])
            else:
                mags = np.abs(w[ties])
                best = ties[mags >= mags.max() - 1e-12]
                r = int(best[np.argmin(basis[best])])
            leaving = basis[r]
            x[j] += direction * theta
            x[basis] = xb + theta * rate
            x[leaving] = lb[leaving] if rate[r] < 0 else ub[leaving]
            basis[r] = j
            piv = w[r]
            if abs(piv) < PIVOT_TOL:
                raise LPNumericalError("pivot element vanished")
            row = self.Binv[r] / piv
            self.Binv -= np.outer(w, row)
            self.Binv[r] = row
            degenerate = degenerate + 1 if theta < 1e-12 else 0


def solve_simplex(lp: LinearProgram, max_iter: int | None = None) -> LpOutcome:
    """Solve ``lp`` with the two-phase revised simplex."""
    A0 = lp.A.toarray()
    m, n = A0.shape
    cost0 = -lp.c if lp.maximize else lp.c.astype(float)

    ineq = np.flatnonzero(lp.sense != EQ)
    k = len(ineq)
    S = np.zeros((m, k))
    S[ineq, np.arange(k)] = 1.0
    is_le = lp.sense[ineq] == LE
    s_lb = np.where(is_le, 0.0, -np.inf)
    s_ub = np.where(is_le, np.inf, 0.0)

    lb1 = np.concatenate([lp.lb, s_lb])
    ub1 = np.concatenate([lp.ub, s_ub])
    x1 = np.where(np.isfinite(lb1), lb1, np.where(np.isfinite(ub1), ub1, 0.0))
    A1 = np.hstack([A0, S])
    resid = lp.rhs - A1 @ x1
    sgn = np.where(resid >= 0, 1.0, -1.0)

    A = np.hstack([A1, np.diag(sgn)])
    lb = np.concatenate([lb1, np.zeros(m)])
    ub = np.concatenate([ub1, np.full(m, np.inf)])
    x = np.concatenate([x1, np.abs(resid)])
    n1 = n + k
    basis = np.arange(n1, n1 + m)
    tab = _Tableau(A, lp.rhs.astype(float), lb, ub, x, basis, np.diag(sgn))
    max_iter = max_iter or 50 * (m + n1) + 1000

    phase1 = np.concatenate([np.zeros(n1), np.ones(m)])
    tab.run(phase1, max_iter)
    infeas = float(x[n1:].sum())
    if infeas > FEAS_TOL * (1.0 + np.abs(lp.rhs).max(initial=0.0)):
        return LpOutcome(Status.INFEASIBLE, iterations=tab.iterations, infeasibility=infeas, backend="simplex")

    # artificials stay in the model fixed at zero; a basic one leaves on the
    # first pivot that touches its row
    ub[n1:] = 0.0
    cost = np.concatenate([cost0, np.zeros(k + m)])
    status = tab.run(cost, max_iter)
    if status is Status.UNBOUNDED:
        return LpOutcome(Status.UNBOUNDED, iterations=tab.iterations, backend="simplex")
    tab.refactor()

    xs = x[:n].copy()
    y = cost[tab.basis] @ tab.Binv
    red = cost0 - A0.T @ y
    lo = np.where(np.isfinite(lp.lb), lp.lb, 0.0)
    hi = np.where(np.isfinite(lp.ub), lp.ub, 0.0)
    dual_obj = float(lp.rhs @ y + np.where(red > 0, red * lo, red * hi).sum())
    if lp.maximize:
        dual_obj, y = -dual_obj, -y
    return LpOutcome(
        Status.OPTIMAL,
        xs,
        float(lp.c @ xs),
        y,
        dual_obj,
        tab.iterations,
        backend="simplex",
    )
