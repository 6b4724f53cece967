"""Flexibility-band aggregation models.

Every model picks per-period bounds ``L_t <= U_t`` on aggregate power that
maximize ``sum_t w_t (U_t - L_t)`` while guaranteeing (in its own sense)
that a dispatch exists for setpoints inside the band.  From most to least
conservative:

* ``envelope``: per-ESS power envelopes whose induced SoC path stays in bounds.
* ``rectangular`` / ``single_ess``: a SoC box per period, with recourse from
  every box corner at both band endpoints.
* ``enumeration``: a full binary scenario tree over band endpoints; exact for
  causal (nonanticipative) dispatch under the convex ESS model.
* ``two_stage``: one full-horizon dispatch per endpoint pattern, allowed to
  see the whole trajectory in advance.
* ``outer``: only the all-lower and all-upper trajectories.
"""

from __future__ import annotations

import itertools
import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .lp import EQ, GE, LE, LPBuilder, Status, check_feasible, solve
from .model import Case, PeriodPolyhedron, PeriodVars, build_period_polyhedron
from .scenario import (DEFAULT_CORNER_CAP, DEFAULT_LEAF_CAP, ScenarioSizeError, ScenarioTree,
                       enumerate_soc_corners, enumerate_trajectory_patterns)

log = logging.getLogger(__name__)

BAND_TOL = 1e-9
WIDEN_SLACKS = (1e-10, 1e-8, 1e-7)
SEPARATION_WARN = 2**10

# nested from most to least conservative
ORDER = ("envelope", "rectangular", "enumeration", "two_stage", "outer")


class AggregationError(RuntimeError):
    """A model could not produce a band."""


class InfeasibleCaseError(AggregationError):
    """No dispatch exists at all; ``period``/``device`` locate the cause when known."""

    def __init__(self, message: str, period: Optional[int] = None, device: Optional[str] = None):
        super().__init__(message)
        self.period = period
        self.device = device


class PreconditionError(ValueError):
    """The case does not fit the model (e.g. wrong ESS count)."""


class EmptyIntersectionError(ValueError):
    """Two bands share no point in some period."""

    def __init__(self, period: int):
        super().__init__(f"band intersection is empty in period {period}")
        self.period = period


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FlexBand:
    """Per-period bounds on aggregate power (MW)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).reshape(-1)
        hi = np.array(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError(f"lower has {lo.size} periods, upper has {hi.size}")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("band bounds must be finite")
        bad = np.flatnonzero(lo > hi + BAND_TOL * np.maximum(1.0, np.abs(hi)))
        if bad.size:
            raise ValueError(f"lower > upper in period {bad[0] + 1}")
        # adding 0.0 turns -0.0 into 0.0 so printed and serialized bands stay tidy
        object.__setattr__(self, "lower", _readonly(lo + 0.0))
        object.__setattr__(self, "upper", _readonly(np.maximum(hi, lo) + 0.0))

    @property
    def T(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, trajectory, tol: float = 0.0) -> bool:
        p = np.asarray(trajectory, dtype=float)
        return bool(np.all(p >= self.lower - tol) and np.all(p <= self.upper + tol))

    def intersect(self, other: "FlexBand") -> "FlexBand":
        lo = np.maximum(self.lower, other.lower)
        hi = np.minimum(self.upper, other.upper)
        bad = np.flatnonzero(lo > hi + BAND_TOL)
        if bad.size:
            raise EmptyIntersectionError(int(bad[0]) + 1)
        return FlexBand(lo, np.maximum(lo, hi))

    def vertex(self, pattern: Sequence[int]) -> np.ndarray:
        """Trajectory taking the upper bound where ``pattern`` is 1."""
        return np.where(np.asarray(pattern, dtype=bool), self.upper, self.lower)


def flexibility_index(band: FlexBand, weights) -> float:
    """Weighted sum of band widths."""
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size != band.T:
        raise ValueError(f"{w.size} weights for a {band.T}-period band")
    return float(w @ band.width)


@dataclass(frozen=True)
class SocBox:
    """Per-ESS SoC range at the end of each period; column 0 is the initial state."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", _readonly(np.atleast_2d(self.lo)))
        object.__setattr__(self, "hi", _readonly(np.atleast_2d(self.hi)))
        if self.lo.shape != self.hi.shape:
            raise ValueError("lo/hi shape mismatch")

    def violations(self, case: Case, tol: float = 1e-7) -> list:
        """Messages for every broken box invariant (empty when valid)."""
        out = []
        if case.n_ess == 0:
            return out
        for i, e in enumerate(case.esses):
            lo, hi = self.lo[i], self.hi[i]
            if (lo < e.e_min - tol).any() or (hi > e.e_max + tol).any():
                out.append(f"esses[{i}]: box leaves the energy bounds")
            if (lo > hi + tol).any():
                out.append(f"esses[{i}]: lo > hi")
            if not lo[0] - tol <= e.e0 <= hi[0] + tol:
                out.append(f"esses[{i}]: initial SoC outside the period-0 box")
        return out


@dataclass(frozen=True)
class Envelopes:
    """Per-ESS discharge/charge envelopes and the SoC bounds they induce.

    The lower power envelope discharges ``d_lo`` and charges ``c_lo``; the upper
    one discharges ``d_hi`` and charges ``c_hi``.  Any split with
    ``d_lo <= p_dis <= d_hi`` and ``c_hi <= p_chg <= c_lo`` keeps the SoC
    between ``e_lo`` and ``e_hi``.
    """

    d_lo: np.ndarray
    c_lo: np.ndarray
    d_hi: np.ndarray
    c_hi: np.ndarray
    e_lo: np.ndarray
    e_hi: np.ndarray

    def __post_init__(self):
        for name in ("d_lo", "c_lo", "d_hi", "c_hi", "e_lo", "e_hi"):
            object.__setattr__(self, name, _readonly(np.atleast_2d(getattr(self, name))))

    @property
    def p_lo(self) -> np.ndarray:
        """Signed lower power envelope (discharge positive)."""
        return self.d_lo - self.c_lo

    @property
    def p_hi(self) -> np.ndarray:
        return self.d_hi - self.c_hi

    def soc_box(self) -> SocBox:
        return SocBox(self.e_lo, self.e_hi)


@dataclass(frozen=True)
class ScenarioSolution:
    """Scenario-tree dispatch: aggregate power and end-of-period SoC per tree block."""

    tree: ScenarioTree
    pA: np.ndarray
    soc: np.ndarray

    def block_soc(self, depth: int, bits: int) -> np.ndarray:
        return self.soc[(1 << depth) - 2 + bits]


@dataclass(frozen=True)
class AggregationResult:
    model: str
    band: FlexBand
    objective: float
    weights: tuple
    certificate: object = None
    stats: dict = field(default_factory=dict)
    case_name: str = ""


# --------------------------------------------------------------------------
# LP assembly shared by all models


class _BandLP:
    """Band variables plus helpers for stamping recourse copies."""

    def __init__(self, case: Case):
        self.case = case
        self.b = LPBuilder()
        self.polys = [build_period_polyhedron(case, t) for t in range(1, case.T + 1)]
        T = case.T
        self.L = self.b.add_vars(T)
        self.U = self.b.add_vars(T)
        for t in range(T):
            self.b.add_row([self.L[t], self.U[t]], [1.0, -1.0], LE, 0.0)
        w = np.asarray(case.weights)
        self.b.add_objective(self.U, w)
        self.b.add_objective(self.L, -w)
        self.copies = 0

    def copy(self, t: int, side: int) -> PeriodVars:
        pv = self.polys[t - 1].add_to(self.b)
        bound = self.U if side else self.L
        self.b.add_row([pv.pA, bound[t - 1]], [1.0, -1.0], EQ, 0.0)
        self.copies += 1
        return pv

    def soc_vars(self, t: int, pv: PeriodVars, prev) -> np.ndarray:
        """New end-of-period SoC columns linked to ``prev`` (columns or None for e0)."""
        poly = self.polys[t - 1]
        out = np.empty(self.case.n_ess, dtype=int)
        for i, e in enumerate(self.case.esses):
            ev = self.b.add_var(e.e_min, e.e_max)
            cols, coefs = poly.soc_row(pv, i)
            if prev is None:
                self.b.add_row(np.r_[ev, cols], np.r_[1.0, -coefs], EQ, e.kappa * e.e0)
            else:
                self.b.add_row(np.r_[ev, prev[i], cols], np.r_[1.0, -e.kappa, -coefs], EQ, 0.0)
            out[i] = ev
        return out

    def solve(self, backend):
        lp = self.b.build(maximize=True)
        res = solve(lp, backend)
        if res.status is Status.INFEASIBLE:
            raise diagnose_infeasibility(self.case, backend)
        if not res.optimal:
            raise AggregationError(f"band LP ended with status {res.status.value}")
        return lp, res

    def band(self, x) -> FlexBand:
        lo, hi = x[self.L], x[self.U]
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise AggregationError("unbounded band")
        return FlexBand(lo, np.maximum(hi, lo))


def _result(model, case, band, certificate, lp, stats, t0) -> AggregationResult:
    stats = dict(stats)
    stats.setdefault("lp_vars", lp.n_vars)
    stats.setdefault("lp_rows", lp.n_rows)
    stats["wall_time"] = time.perf_counter() - t0
    return AggregationResult(model, band, flexibility_index(band, case.weights), case.weights, certificate,
                             stats, case.name)


# --------------------------------------------------------------------------
# infeasibility attribution


def _prefix_feasible(case: Case, horizon: int, backend, relax: Optional[int] = None) -> bool:
    b = LPBuilder()
    prev = None
    for t in range(1, horizon + 1):
        poly = build_period_polyhedron(case, t)
        pv = poly.add_to(b)
        cur = []
        for i, e in enumerate(case.esses):
            lo, hi = (-np.inf, np.inf) if i == relax else (e.e_min, e.e_max)
            ev = b.add_var(lo, hi)
            cols, coefs = poly.soc_row(pv, i)
            if prev is None:
                b.add_row(np.r_[ev, cols], np.r_[1.0, -coefs], EQ, e.kappa * e.e0)
            else:
                b.add_row(np.r_[ev, prev[i], cols], np.r_[1.0, -e.kappa, -coefs], EQ, 0.0)
            cur.append(ev)
        prev = cur
    return check_feasible(b.build(), backend)


def diagnose_infeasibility(case: Case, backend=None) -> InfeasibleCaseError:
    """Locate the first period, and if possible the ESS, that makes the case infeasible."""
    for t in range(1, case.T + 1):
        b = LPBuilder()
        build_period_polyhedron(case, t).add_to(b)
        if not check_feasible(b.build(), backend):
            return InfeasibleCaseError(
                f"period {t}: device limits, line limits and power balance admit no dispatch", period=t)
    for t in range(1, case.T + 1):
        if _prefix_feasible(case, t, backend):
            continue
        for i in range(case.n_ess):
            if _prefix_feasible(case, t, backend, relax=i):
                return InfeasibleCaseError(
                    f"period {t}: energy bounds of esses[{i}] cannot be kept", period=t, device=f"esses[{i}]")
        return InfeasibleCaseError(f"period {t}: ESS energy bounds cannot be kept jointly", period=t)
    return InfeasibleCaseError("band LP infeasible although a dispatch trajectory exists")


# --------------------------------------------------------------------------
# models


def solve_outer(case: Case, backend: Optional[str] = None) -> AggregationResult:
    """Band admitting a full-horizon dispatch for the all-lower and all-upper trajectories."""
    t0 = time.perf_counter()
    m = _BandLP(case)
    for side in (0, 1):
        prev = None
        for t in range(1, case.T + 1):
            prev = m.soc_vars(t, m.copy(t, side), prev)
    lp, res = m.solve(backend)
    return _result("outer", case, m.band(res.x), None, lp, {"lp_solves": 1}, t0)


def _add_pattern(m: _BandLP, pattern) -> None:
    prev = None
    for t, side in enumerate(pattern, start=1):
        prev = m.soc_vars(t, m.copy(t, side), prev)


def solve_two_stage(case: Case, mode: str = "full", backend: Optional[str] = None,
                    cap: int = DEFAULT_LEAF_CAP) -> AggregationResult:
    """Band whose every endpoint pattern admits a full-horizon dispatch.

    Recourse may see the whole trajectory in advance.  Since the recourse set
    is convex in the trajectory, checking the ``2**T`` endpoint patterns is
    exact.

    Args:
        case: the system.
        mode: ``"full"`` stamps every pattern; ``"lazy"`` starts from the two
            constant patterns and adds violated ones until none remain.
        backend: LP backend name.
        cap: largest pattern count allowed.
    """
    _check_mode(mode)
    t0 = time.perf_counter()
    patterns = enumerate_trajectory_patterns(case.T, cap)
    if mode == "full":
        m = _BandLP(case)
        for pat in patterns:
            _add_pattern(m, pat)
        lp, res = m.solve(backend)
        return _result("two_stage", case, m.band(res.x), None, lp,
                       {"lp_solves": 1, "patterns": len(patterns)}, t0)

    if len(patterns) > SEPARATION_WARN:
        warnings.warn(f"lazy two-stage separation scans {len(patterns)} patterns per iteration", stacklevel=2)
    active = list(dict.fromkeys([patterns[0], patterns[-1]]))
    solves = 0
    for it in range(1, len(patterns) + 2):
        m = _BandLP(case)
        for pat in active:
            _add_pattern(m, pat)
        lp, res = m.solve(backend)
        solves += 1
        band = m.band(res.x)
        seen = set(active)
        violated = [p for p in patterns if p not in seen and not trajectory_feasible(case, band.vertex(p), backend)]
        solves += len(patterns) - len(seen)
        if not violated:
            return _result("two_stage", case, band, None, lp,
                           {"lp_solves": solves, "iterations": it, "patterns": len(active),
                            "added_patterns": len(active) - 2}, t0)
        active.extend(violated)
    raise AssertionError("lazy two-stage exceeded its finite iteration bound")


def solve_enumeration(case: Case, backend: Optional[str] = None, cap: int = DEFAULT_LEAF_CAP) -> AggregationResult:
    """Band with a causal dispatch for every endpoint pattern (scenario tree).

    Each tree block holds one period's dispatch and depends only on the
    endpoints chosen so far, so shared prefixes share dispatch decisions.
    """
    t0 = time.perf_counter()
    tree = ScenarioTree(case.T, cap)
    m = _BandLP(case)
    pA_cols = np.empty(len(tree), dtype=int)
    soc_cols = np.empty((len(tree), case.n_ess), dtype=int)
    for node in tree.nodes:
        pv = m.copy(node.depth, node.side)
        prev = None if node.parent < 0 else soc_cols[node.parent]
        soc_cols[node.index] = m.soc_vars(node.depth, pv, prev)
        pA_cols[node.index] = pv.pA
    lp, res = m.solve(backend)
    cert = ScenarioSolution(tree, _readonly(res.x[pA_cols]), _readonly(res.x[soc_cols]))
    return _result("enumeration", case, m.band(res.x), cert, lp, {"lp_solves": 1, "blocks": len(tree)}, t0)


def _box_lp(case: Case, corners) -> tuple:
    m = _BandLP(case)
    n, T = case.n_ess, case.T
    lo = np.empty((n, T + 1), dtype=int)
    hi = np.empty((n, T + 1), dtype=int)
    for i, e in enumerate(case.esses):
        lo[i, 0] = m.b.add_var(e.e_min, e.e0)
        hi[i, 0] = m.b.add_var(e.e0, e.e_max)
        for t in range(1, T + 1):
            lo[i, t] = m.b.add_var(e.e_min, e.e_max)
            hi[i, t] = m.b.add_var(e.e_min, e.e_max)
            m.b.add_row([lo[i, t], hi[i, t]], [1.0, -1.0], LE, 0.0)
    for t in range(1, T + 1):
        poly = m.polys[t - 1]
        for corner in corners:
            for side in (0, 1):
                pv = m.copy(t, side)
                for i, e in enumerate(case.esses):
                    start = hi[i, t - 1] if corner[i] else lo[i, t - 1]
                    cols, coefs = poly.soc_row(pv, i)
                    c = np.r_[start, cols]
                    v = np.r_[e.kappa, coefs]
                    m.b.add_row(np.r_[c, lo[i, t]], np.r_[v, -1.0], GE, 0.0)
                    m.b.add_row(np.r_[c, hi[i, t]], np.r_[v, -1.0], LE, 0.0)
    return m, lo, hi


def _solve_box(model: str, case: Case, corners, backend, stats, t0) -> tuple:
    m, lo, hi = _box_lp(case, corners)
    lp, res = m.solve(backend)
    box = SocBox(res.x[lo] if case.n_ess else np.zeros((0, case.T + 1)),
                 res.x[hi] if case.n_ess else np.zeros((0, case.T + 1)))
    band = m.band(res.x)
    return band, box, lp


def solve_rectangular(case: Case, mode: str = "full", backend: Optional[str] = None,
                      corner_cap: int = DEFAULT_CORNER_CAP) -> AggregationResult:
    """Band certified by a per-period SoC box.

    From every corner of the previous box and at both band endpoints, some
    dispatch must land the SoC inside the next box.

    Args:
        case: the system.
        mode: ``"full"`` stamps all ``2**n_ess`` corners; ``"lazy"`` starts
            from the all-low and all-high corners and adds corners whose
            recourse check fails.
        backend: LP backend name.
        corner_cap: largest ESS count allowed (corners = 2**count).
    """
    _check_mode(mode)
    t0 = time.perf_counter()
    corners = enumerate_soc_corners(case.n_ess, corner_cap)
    if mode == "full":
        band, box, lp = _solve_box("rectangular", case, corners, backend, {}, t0)
        return _result("rectangular", case, band, box, lp, {"lp_solves": 1, "corners": len(corners)}, t0)

    active = list(dict.fromkeys([corners[0], corners[-1]]))
    solves = 0
    for it in range(1, len(corners) + 1):
        band, box, lp = _solve_box("rectangular", case, active, backend, {}, t0)
        solves += 1
        rest = [c for c in corners if c not in set(active)]
        bad = rectangular_violations(case, band, box, rest, backend)
        solves += 2 * case.T * len(rest)
        new = list(dict.fromkeys(c for _, c, _ in bad))
        if not new:
            return _result("rectangular", case, band, box, lp,
                           {"lp_solves": solves, "iterations": it, "corners": len(active),
                            "added_corners": len(active) - len(set([corners[0], corners[-1]]))}, t0)
        active.extend(new)
    raise AssertionError("lazy rectangular exceeded its 2**n_ess iteration bound")


def solve_single_ess(case: Case, backend: Optional[str] = None) -> AggregationResult:
    """SoC-box model specialised to exactly one ESS (four copies per period)."""
    if case.n_ess != 1:
        raise PreconditionError(f"single-ESS model needs exactly one ESS, case has {case.n_ess}")
    t0 = time.perf_counter()
    band, box, lp = _solve_box("single_ess", case, [(0,), (1,)], backend, {}, t0)
    return _result("single_ess", case, band, box, lp, {"lp_solves": 1}, t0)


def solve_envelope(case: Case, backend: Optional[str] = None, widen: bool = True) -> AggregationResult:
    """Band served by ESS power envelopes fixed ahead of time.

    The first LP maximizes the index.  The second keeps the index at its
    optimum and maximizes the total weighted envelope width, which gives
    disaggregation more room.

    Args:
        case: the system.
        backend: LP backend name.
        widen: run the second (envelope-widening) LP.
    """
    t0 = time.perf_counter()
    m = _BandLP(case)
    b = m.b
    n, T = case.n_ess, case.T
    shape = (n, T)
    d_lo, c_lo, d_hi, c_hi = (np.empty(shape, dtype=int) for _ in range(4))
    e_lo = np.empty((n, T), dtype=int)
    e_hi = np.empty((n, T), dtype=int)
    for i, e in enumerate(case.esses):
        for t in range(T):
            d_lo[i, t], d_hi[i, t] = b.add_var(0.0, e.p_dis_max), b.add_var(0.0, e.p_dis_max)
            c_lo[i, t], c_hi[i, t] = b.add_var(0.0, e.p_chg_max), b.add_var(0.0, e.p_chg_max)
            e_lo[i, t], e_hi[i, t] = b.add_var(e.e_min, e.e_max), b.add_var(e.e_min, e.e_max)
    for t in range(1, T + 1):
        poly = m.polys[t - 1]
        k = t - 1
        for i, e in enumerate(case.esses):
            dd, dc = poly.delta_dis[i], poly.delta_chg[i]
            # highest SoC follows the least-discharging envelope, lowest the most-discharging one
            for ev, dv, cv in ((e_hi, d_lo, c_lo), (e_lo, d_hi, c_hi)):
                if t == 1:
                    b.add_row([ev[i, k], dv[i, k], cv[i, k]], [1.0, dd, -dc], EQ, e.kappa * e.e0)
                else:
                    b.add_row([ev[i, k], ev[i, k - 1], dv[i, k], cv[i, k]], [1.0, -e.kappa, dd, -dc], EQ, 0.0)
        for side in (0, 1):
            pv = m.copy(t, side)
            for i in range(n):
                b.add_row([pv.sD[i], d_lo[i, k]], [1.0, -1.0], GE, 0.0)
                b.add_row([pv.sD[i], d_hi[i, k]], [1.0, -1.0], LE, 0.0)
                b.add_row([pv.sC[i], c_hi[i, k]], [1.0, -1.0], GE, 0.0)
                b.add_row([pv.sC[i], c_lo[i, k]], [1.0, -1.0], LE, 0.0)
    lp, res = m.solve(backend)
    solves = 1
    if widen and n:
        best = res.objective
        w = np.asarray(case.weights)
        first = res
        b.clear_objective()
        for i in range(n):
            b.add_objective(d_hi[i], w)
            b.add_objective(d_lo[i], -w)
            b.add_objective(c_lo[i], w)
            b.add_objective(c_hi[i], -w)
        keep = b.add_row(np.r_[m.U, m.L], np.r_[w, -w], GE, best)
        # hold the index at its optimum; loosen only if round-off makes that infeasible
        for slack in WIDEN_SLACKS:
            b.set_rhs(keep, best - slack * max(1.0, abs(best)))
            lp2 = b.build(maximize=True)
            res = solve(lp2, backend)
            solves += 1
            if res.optimal:
                lp = lp2
                break
        else:
            log.warning("envelope widening failed; keeping the unwidened envelopes")
            res = first
    x = res.x
    e0 = case.e0[:, None]
    if n:
        cert = Envelopes(x[d_lo], x[c_lo], x[d_hi], x[c_hi], np.hstack([e0, x[e_lo]]), np.hstack([e0, x[e_hi]]))
    else:
        z = np.zeros((0, T))
        cert = Envelopes(z, z, z, z, np.zeros((0, T + 1)), np.zeros((0, T + 1)))
    return _result("envelope", case, m.band(x), cert, lp, {"lp_solves": solves}, t0)


# --------------------------------------------------------------------------
# recourse checks


def _fixed_pa(b: LPBuilder, pv: PeriodVars, value: float, tol: float) -> None:
    slack = tol * max(1.0, abs(value))
    b.bound(pv.pA, value - slack, value + slack)


def trajectory_feasible(case: Case, trajectory, backend: Optional[str] = None, tol: float = 1e-9) -> bool:
    """Whether a full-horizon dispatch exists for a known aggregate trajectory."""
    traj = np.asarray(trajectory, dtype=float)
    b = LPBuilder()
    prev = None
    for t in range(1, case.T + 1):
        poly = build_period_polyhedron(case, t)
        pv = poly.add_to(b)
        _fixed_pa(b, pv, traj[t - 1], tol)
        cur = []
        for i, e in enumerate(case.esses):
            ev = b.add_var(e.e_min - tol, e.e_max + tol)
            cols, coefs = poly.soc_row(pv, i)
            if prev is None:
                b.add_row(np.r_[ev, cols], np.r_[1.0, -coefs], EQ, e.kappa * e.e0)
            else:
                b.add_row(np.r_[ev, prev[i], cols], np.r_[1.0, -e.kappa, -coefs], EQ, 0.0)
            cur.append(ev)
        prev = cur
    return check_feasible(b.build(), backend)


def box_step_feasible(poly: PeriodPolyhedron, case: Case, setpoint: float, soc_prev, lo_next, hi_next,
                      backend: Optional[str] = None, tol: float = 1e-7) -> bool:
    """Whether one period can serve ``setpoint`` from ``soc_prev`` and land in ``[lo_next, hi_next]``."""
    b = LPBuilder()
    pv = poly.add_to(b)
    _fixed_pa(b, pv, setpoint, 1e-9)
    for i, e in enumerate(case.esses):
        cols, coefs = poly.soc_row(pv, i)
        base = e.kappa * soc_prev[i]
        b.add_range(cols, coefs, lo_next[i] - base - tol, hi_next[i] - base + tol)
    return check_feasible(b.build(), backend)


def rectangular_violations(case: Case, band: FlexBand, box: SocBox, corners=None,
                           backend: Optional[str] = None, tol: float = 1e-7) -> list:
    """Corner/endpoint combinations whose one-period recourse into the next box fails.

    Returns a list of ``(period, corner, side)`` triples; empty means the box
    certifies the band.
    """
    if corners is None:
        corners = enumerate_soc_corners(case.n_ess)
    out = []
    for t in range(1, case.T + 1):
        poly = build_period_polyhedron(case, t)
        for corner in corners:
            start = np.array([box.hi[i, t - 1] if c else box.lo[i, t - 1] for i, c in enumerate(corner)])
            for side in (0, 1):
                p = band.upper[t - 1] if side else band.lower[t - 1]
                if not box_step_feasible(poly, case, p, start, box.lo[:, t], box.hi[:, t], backend, tol):
                    out.append((t, tuple(corner), side))
    return out


# --------------------------------------------------------------------------
# dispatch by name


def _check_mode(mode: str) -> None:
    if mode not in ("full", "lazy"):
        raise ValueError(f"mode must be 'full' or 'lazy', got {mode!r}")


MODELS = ("envelope", "single_ess", "rectangular", "enumeration", "two_stage", "outer")


def aggregate(case: Case, model: str, mode: str = "full", backend: Optional[str] = None) -> AggregationResult:
    """Run aggregation model ``model`` by name."""
    if model == "envelope":
        return solve_envelope(case, backend)
    if model == "single_ess":
        return solve_single_ess(case, backend)
    if model == "rectangular":
        return solve_rectangular(case, mode, backend)
    if model == "enumeration":
        return solve_enumeration(case, backend)
    if model == "two_stage":
        return solve_two_stage(case, mode, backend)
    if model == "outer":
        return solve_outer(case, backend)
    raise ValueError(f"unknown model {model!r}; choose from {', '.join(MODELS)}")


def ordering_violations(objectives: dict, slack: float = 1e-6) -> list:
    """Pairs of models whose objectives break the expected nesting.

    ``single_ess`` is compared for equality with ``rectangular`` when both
    are present.  Missing models are skipped.
    """
    present = [m for m in ORDER if m in objectives]
    bad = []
    for a, b in itertools.combinations(present, 2):
        if objectives[a] > objectives[b] + slack:
            bad.append((a, b))
    if "single_ess" in objectives:
        for other in ("rectangular", "enumeration"):
            if other in objectives and abs(objectives["single_ess"] - objectives[other]) > slack:
                bad.append(("single_ess", other))
    return bad
