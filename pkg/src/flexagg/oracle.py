"""Grid-based ground truth for tiny instances.

Works backward from the last period: the set of end-of-period SoC values
from which every remaining in-band setpoint can be served is computed on a
SoC grid.  A band is servable when the initial SoC survives to period 0.

One period's reachable behaviour does not depend on the current SoC except
through the energy bounds: the next SoC is ``kappa * e - d`` where ``d`` is
the energy decrease.  So each period is summarized once by the exact
projection of its constraint set onto ``(aggregate power, d)`` (one ESS) or
onto ``(d_1, d_2)`` at a fixed aggregate power (two ESSs), computed by
support-direction LPs.

Two rounding variants bracket the discretization:

* ``conservative``: the next SoC must land in the convex hull of the
  surviving grid points.  Servable SoC sets are convex, so every surviving
  point is truly servable.
* ``optimistic``: the hull is grown by one grid step per dimension first.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .aggregation import FlexBand
from .lp import EQ, LPBuilder, LinearProgram, solve
from .model import Case, aggregate_interval, build_period_polyhedron

MAX_GRID_POINTS = 10**6
HIT_TOL = 1e-9
VARIANTS = ("conservative", "optimistic")


class GridError(ValueError):
    """Grid misconfigured, too large, or the case is outside the oracle's reach."""


@dataclass(frozen=True)
class GridSpec:
    """Discretization of setpoints (MW) and SoC (MWh)."""

    power_step: float = 0.05
    soc_step: float = 0.05
    max_points: int = MAX_GRID_POINTS

    def __post_init__(self):
        if not (self.power_step > 0 and self.soc_step > 0):
            raise GridError("grid steps must be positive")


@dataclass(frozen=True)
class SocSetApprox:
    """Surviving SoC grid points per period; ``sets[t]`` is a boolean array over
    the product grid of ``axes`` (0-d when there is no ESS)."""

    axes: tuple
    sets: tuple
    variant: str

    def contains(self, t: int, soc) -> bool:
        idx = tuple(int(np.argmin(np.abs(ax - v))) for ax, v in zip(self.axes, soc))
        return bool(self.sets[t][idx])


def soc_axes(case: Case, step: float) -> tuple:
    """Per-ESS SoC grid anchored at the initial SoC, plus both energy bounds."""
    axes = []
    for e in case.esses:
        k_lo = np.floor((e.e_min - e.e0) / step + 1e-9)
        k_hi = np.ceil((e.e_max - e.e0) / step - 1e-9)
        pts = e.e0 + step * np.arange(k_lo, k_hi + 1)
        pts = pts[(pts >= e.e_min - 1e-12) & (pts <= e.e_max + 1e-12)]
        axes.append(np.unique(np.r_[pts, e.e_min, e.e_max, e.e0]))
    return tuple(axes)


def setpoint_lattice(lo: float, hi: float, step: float) -> np.ndarray:
    """Multiples of ``step`` inside ``[lo, hi]`` plus both ends."""
    ks = np.arange(np.ceil(lo / step - 1e-9), np.floor(hi / step + 1e-9) + 1)
    pts = ks * step
    pts = pts[(pts > lo + 1e-12) & (pts < hi - 1e-12)]
    return np.unique(np.r_[lo, pts, hi])


# --------------------------------------------------------------------------
# exact 2-D projections


def _polygon(lp: LinearProgram, fx: np.ndarray, fy: np.ndarray, backend=None, max_lps: int = 400):
    """Vertices (counter-clockwise) of the image of ``lp``'s feasible set under
    ``x -> (fx @ x, fy @ x)``; ``None`` when infeasible.  May return one or two
    points for degenerate images."""
    count = [0]

    def support(d):
        count[0] += 1
        if count[0] > max_lps:
            raise GridError("projection did not converge")
        res = solve(dataclasses.replace(lp, c=d[0] * fx + d[1] * fy, maximize=True), backend)
        if not res.optimal:
            return None
        return np.array([fx @ res.x, fy @ res.x])

    pts = []
    for d in ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)):
        v = support(d)
        if v is None:
            return None
        if not pts or np.abs(v - pts[-1]).max() > 1e-9:
            pts.append(v)
    if len(pts) > 1 and np.abs(pts[0] - pts[-1]).max() <= 1e-9:
        pts.pop()
    scale = 1.0 + max(np.abs(p).max() for p in pts)
    i = 0
    while len(pts) > 1 and i < len(pts):
        u, v = pts[i], pts[(i + 1) % len(pts)]
        n = np.array([v[1] - u[1], u[0] - v[0]])
        w = support(n)
        if n @ w > n @ u + 1e-9 * scale * max(1.0, np.abs(n).max()):
            pts.insert(i + 1, w)
        else:
            i += 1
    return np.array(pts)


def _slice(poly: np.ndarray, x: float, tol: float = 1e-9):
    """Range of ``y`` over the points of ``poly`` with first coordinate ``x``."""
    xs = poly[:, 0]
    if x < xs.min() - tol or x > xs.max() + tol:
        return None
    x = min(max(x, xs.min()), xs.max())
    ys = []
    k = len(poly)
    for i in range(k):
        a, b = poly[i], poly[(i + 1) % k]
        if min(a[0], b[0]) - tol <= x <= max(a[0], b[0]) + tol:
            if abs(b[0] - a[0]) < 1e-12:
                ys += [a[1], b[1]]
            else:
                lam = min(max((x - a[0]) / (b[0] - a[0]), 0.0), 1.0)
                ys.append(a[1] + lam * (b[1] - a[1]))
    return (min(ys), max(ys)) if ys else None


class _PeriodReach:
    """Exact one-period behaviour of period ``t`` independent of the SoC."""

    def __init__(self, case: Case, t: int, backend=None):
        self.case = case
        self.t = t
        self.backend = backend
        poly = build_period_polyhedron(case, t)
        b = LPBuilder()
        pv = poly.add_to(b)
        self.pA = pv.pA
        self.delta = []
        for i in range(case.n_ess):
            # d_i = energy decrease over the period
            d = b.add_var()
            cols, coefs = poly.soc_row(pv, i)
            b.add_row(np.r_[d, cols], np.r_[1.0, coefs], EQ, 0.0)
            self.delta.append(d)
        self.lp = b.build()
        n = self.lp.n_vars
        self._unit = lambda j: np.eye(1, n, j).ravel()
        self._cache = {}
        self.kappa = np.array([e.kappa for e in case.esses])
        if case.n_ess == 0:
            lo = solve(dataclasses.replace(self.lp, c=self._unit(self.pA), maximize=False), backend)
            hi = solve(dataclasses.replace(self.lp, c=self._unit(self.pA), maximize=True), backend)
            self.p_range = (lo.objective, hi.objective) if lo.optimal else None
        elif case.n_ess == 1:
            self.shape = _polygon(self.lp, self._unit(self.pA), self._unit(self.delta[0]), backend)
            self.p_range = None if self.shape is None else (self.shape[:, 0].min(), self.shape[:, 0].max())
        else:
            lo = solve(dataclasses.replace(self.lp, c=self._unit(self.pA), maximize=False), backend)
            hi = solve(dataclasses.replace(self.lp, c=self._unit(self.pA), maximize=True), backend)
            self.p_range = (lo.objective, hi.objective) if lo.optimal else None

    def delta_interval(self, p: float):
        """One ESS: range of energy decrease compatible with setpoint ``p``."""
        if self.shape is None:
            return None
        return _slice(self.shape, p)

    def delta_polygon(self, p: float):
        """Two ESSs: polygon of energy-decrease pairs compatible with ``p``."""
        key = round(p, 12)
        if key not in self._cache:
            lb = self.lp.lb.copy()
            ub = self.lp.ub.copy()
            lb[self.pA] = ub[self.pA] = p
            lp = dataclasses.replace(self.lp, lb=lb, ub=ub)
            self._cache[key] = _polygon(lp, self._unit(self.delta[0]), self._unit(self.delta[1]), self.backend)
        return self._cache[key]

    def hits(self, axes, mask: np.ndarray, setpoints: np.ndarray, variant: str) -> np.ndarray:
        """``ok[e, k]``: from grid SoC ``e``, setpoint ``k`` can reach the surviving set ``mask``.

        The surviving set is taken as the convex hull of its grid points
        (grown by one grid step for the optimistic variant).
        """
        n = self.case.n_ess
        if n == 0:
            ok = np.array([self.p_range is not None and self.p_range[0] - HIT_TOL <= p <= self.p_range[1] + HIT_TOL
                           for p in setpoints])
            return ok[None, :] & bool(mask)
        r = HIT_TOL + (max(_max_gap(a) for a in axes) if variant == "optimistic" else 0.0)
        if n == 1:
            ax = axes[0]
            ok = np.zeros((ax.size, setpoints.size), dtype=bool)
            if not mask.any():
                return ok
            h_lo, h_hi = ax[mask].min() - r, ax[mask].max() + r
            for k, p in enumerate(setpoints):
                iv = self.delta_interval(p)
                if iv is not None:
                    start = self.kappa[0] * ax
                    ok[:, k] = (start - iv[1] <= h_hi) & (start - iv[0] >= h_lo)
            return ok
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
        ok = np.zeros((grid.shape[0], setpoints.size), dtype=bool)
        if mask.any():
            hull = _hull(grid[mask.reshape(-1)])
            start = grid * self.kappa
            for k, p in enumerate(setpoints):
                poly = self.delta_polygon(p)
                if poly is not None:
                    ok[:, k] = _overlap(start, poly, hull, r)
        return ok.reshape(mask.shape + (setpoints.size,))


def _normals(poly: np.ndarray) -> list:
    out = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    k = len(poly)
    for i in range(k if k > 2 else k - 1):
        d = poly[(i + 1) % k] - poly[i]
        nrm = np.hypot(*d)
        if nrm > 1e-12:
            out.append(np.array([d[1], -d[0]]) / nrm)
    return out


def _hull(points: np.ndarray) -> np.ndarray:
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts
    try:
        return pts[ConvexHull(pts).vertices]
    except QhullError:
        # collinear: keep the two extreme points
        d = pts[-1] - pts[0]
        proj = pts @ d
        return pts[[np.argmin(proj), np.argmax(proj)]]


def _overlap(starts: np.ndarray, delta_poly: np.ndarray, hull: np.ndarray, r: float) -> np.ndarray:
    """For each start ``s``: does ``s - delta_poly`` meet ``hull`` grown by an L-inf ball ``r``?

    Separating-axis test over the edge normals of both convex sets and the axes.
    """
    ok = np.ones(len(starts), dtype=bool)
    for nrm in _normals(delta_poly) + _normals(hull):
        proj_d = delta_poly @ nrm
        proj_h = hull @ nrm
        grow = r * np.abs(nrm).sum()
        s = starts @ nrm
        ok &= (s - proj_d.max() <= proj_h.max() + grow) & (s - proj_d.min() >= proj_h.min() - grow)
    return ok


def _max_gap(ax: np.ndarray) -> float:
    return float(np.diff(ax).max()) if ax.size > 1 else 0.0


# --------------------------------------------------------------------------
# public operations


def _check(case: Case, grid: GridSpec, max_ess: int, max_T: int, variant: str) -> tuple:
    if variant not in VARIANTS:
        raise GridError(f"variant must be one of {VARIANTS}")
    if case.n_ess > max_ess:
        raise GridError(f"oracle handles at most {max_ess} ESSs, case has {case.n_ess}")
    if case.T > max_T:
        raise GridError(f"oracle handles at most {max_T} periods, case has {case.T}")
    axes = soc_axes(case, grid.soc_step)
    size = int(np.prod([a.size for a in axes])) if axes else 1
    if size > grid.max_points:
        raise GridError(f"SoC grid of {size} points exceeds {grid.max_points}")
    return axes, size


def backward_soc_sets(case: Case, band: FlexBand, grid: GridSpec, variant: str = "conservative",
                      backend: Optional[str] = None, max_T: int = 4) -> SocSetApprox:
    """Surviving SoC grid points at the end of every period for ``band``.

    Args:
        case: system with at most two ESSs.
        band: band to test.
        grid: discretization.
        variant: ``"conservative"`` or ``"optimistic"`` rounding.
        backend: LP backend name.
        max_T: largest horizon accepted.
    """
    axes, size = _check(case, grid, 2, max_T, variant)
    if band.T != case.T:
        raise GridError(f"band has {band.T} periods, case has {case.T}")
    shape = tuple(a.size for a in axes)
    sets = [None] * (case.T + 1)
    sets[case.T] = np.ones(shape, dtype=bool)
    for t in range(case.T, 0, -1):
        sp = setpoint_lattice(band.lower[t - 1], band.upper[t - 1], grid.power_step)
        if size * sp.size > grid.max_points:
            raise GridError(f"{size} SoC points x {sp.size} setpoints exceeds {grid.max_points}")
        ok = _PeriodReach(case, t, backend).hits(axes, sets[t], sp, variant)
        sets[t - 1] = ok.all(axis=-1).reshape(shape)
    for s in sets:
        s.setflags(write=False)
    return SocSetApprox(axes, tuple(sets), variant)


def verify_band(case: Case, band: FlexBand, grid: GridSpec, variant: str = "conservative",
                backend: Optional[str] = None) -> bool:
    """Whether the initial SoC survives the backward recursion."""
    sets = backward_soc_sets(case, band, grid, variant, backend)
    return sets.contains(0, case.e0)


@dataclass(frozen=True)
class OracleSearch:
    value: float  # conservative rounding: a servable band exists with at least this index
    value_optimistic: float
    error_bound: float
    band: Optional[FlexBand]


def _dp(case: Case, reach: list, axes, cands: list, weights: np.ndarray, variant: str):
    """Best index over lattice bands, by backward DP over surviving-set states."""
    shape = tuple(a.size for a in axes)
    e0_idx = tuple(int(np.argmin(np.abs(a - v))) for a, v in zip(axes, case.e0))
    full = np.ones(shape, dtype=bool)
    # state key -> (value of periods t+1.., mask, choices)
    states = {full.tobytes(): (0.0, full, ())}
    for t in range(case.T, 0, -1):
        cp = cands[t - 1]
        P = cp.size
        iu, ju = np.triu_indices(P)
        widths = weights[t - 1] * (cp[ju] - cp[iu])
        new = {}
        for val, mask, choice in states.values():
            ok = reach[t - 1].hits(axes, mask, cp, variant).reshape(-1, P)
            bad = np.concatenate([np.zeros((ok.shape[0], 1)), np.cumsum(~ok, axis=1)], axis=1)
            good = (bad[:, ju + 1] - bad[:, iu]) == 0  # (n_points, n_pairs)
            if t == 1:
                flat = np.ravel_multi_index(e0_idx, shape) if shape else 0
                sel = np.flatnonzero(good[flat])
                if sel.size:
                    k = sel[np.argmax(widths[sel])]
                    cand = (val + widths[k], None, ((iu[k], ju[k]),) + choice)
                    key = b"e0"
                    if key not in new or cand[0] > new[key][0]:
                        new[key] = cand
                continue
            keep = good.any(axis=0)
            if not keep.any():
                continue
            sel = np.flatnonzero(keep)
            packed = np.packbits(good[:, sel], axis=0).T
            uniq, inv = np.unique(packed, axis=0, return_inverse=True)
            inv = inv.reshape(-1)
            for u in range(uniq.shape[0]):
                members = sel[inv == u]
                k = members[np.argmax(widths[members])]
                total = val + widths[k]
                key = uniq[u].tobytes()
                if key not in new or total > new[key][0]:
                    new[key] = (total, good[:, k].reshape(shape), ((iu[k], ju[k]),) + choice)
        states = new
    if not states:
        return -np.inf, None
    total, _, choice = states[b"e0"]
    lo = np.array([cands[t][i] for t, (i, _) in enumerate(choice)])
    hi = np.array([cands[t][j] for t, (_, j) in enumerate(choice)])
    return float(total), FlexBand(lo, hi)


def grid_band_search(case: Case, grid: GridSpec, weights=None, backend: Optional[str] = None) -> OracleSearch:
    """Exhaustive search for the best band with grid-valued endpoints.

    Candidates per period are the multiples of ``grid.power_step`` inside the
    period's power range, plus both ends of that range (and, for the first
    period, the exact range reachable from the initial SoC).  Both
    rounding variants are run; ``error_bound`` is ``2 * max(w) * step * T``,
    the index change from moving every endpoint by one power step.

    Args:
        case: system with at most one ESS and at most three periods.
        grid: discretization.
        weights: index weights, defaulting to the case weights.
        backend: LP backend name.
    """
    axes, size = _check(case, grid, 1, 3, "conservative")
    w = np.asarray(case.weights if weights is None else weights, dtype=float)
    if w.size != case.T:
        raise GridError(f"{w.size} weights for {case.T} periods")
    reach = [_PeriodReach(case, t, backend) for t in range(1, case.T + 1)]
    cands = []
    for r in reach:
        if r.p_range is None:
            raise GridError(f"period {r.t} admits no dispatch")
        cands.append(setpoint_lattice(r.p_range[0], r.p_range[1], grid.power_step))
    # the first period starts from a known SoC, so its exact range is cheap to add
    first = aggregate_interval(case, 1, backend=backend)
    if np.isfinite(first).all():
        cands[0] = np.unique(np.r_[cands[0], first])
    if size * max(c.size for c in cands) ** 2 > 50 * grid.max_points:
        raise GridError("band search space too large for this grid")
    value, band = _dp(case, reach, axes, cands, w, "conservative")
    value_opt, _ = _dp(case, reach, axes, cands, w, "optimistic")
    bound = 2.0 * float(w.max(initial=0.0)) * grid.power_step * case.T
    return OracleSearch(value, value_opt, bound, band)
