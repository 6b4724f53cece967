"""Distribution-system data model and the per-period constraint polyhedron.

Sign conventions: ESS power ``p`` is positive when discharging into the grid.
The aggregate power of a period is the active power drawn from the
transmission system at the reference node (node 1), i.e. total load minus
generation minus ESS output for a lossless network.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .lp import EQ, LE, LPBuilder, solve

REFERENCE_NODE = 1


class CaseValidationError(ValueError):
    """A case violates one of its invariants; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _frozen(values, T: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.size == 1 and T > 1:
        arr = np.full(T, arr[0])
    if arr.shape != (T,):
        raise CaseValidationError(name, f"expected {T} per-period values, got {arr.size}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EssParams:
    node: int
    kappa: float = 1.0
    eta_d: float = 1.0
    eta_c: float = 1.0
    p_dis_max: float = 1.0
    p_chg_max: float = 1.0
    e_min: float = 0.0
    e_max: float = 1.0
    e0: float = 0.0

    def validate(self, where: str = "ess") -> None:
        for name in ("kappa", "eta_d", "eta_c"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise CaseValidationError(f"{where}.{name}", f"must lie in (0, 1], got {v}")
        for name in ("p_dis_max", "p_chg_max"):
            if not getattr(self, name) > 0:
                raise CaseValidationError(f"{where}.{name}", "must be positive")
        if not self.e_min <= self.e0 <= self.e_max:
            raise CaseValidationError(f"{where}.e0", f"{self.e0} outside [{self.e_min}, {self.e_max}]")

    @property
    def ideal(self) -> bool:
        return self.eta_d == 1.0 and self.eta_c == 1.0


@dataclass(frozen=True)
class Line:
    from_node: int
    to_node: int
    susceptance: float
    limit: float


@dataclass(frozen=True)
class Load:
    node: int
    p_min: np.ndarray
    p_max: np.ndarray


@dataclass(frozen=True)
class Generator:
    node: int
    p_min: np.ndarray
    p_max: np.ndarray


@dataclass(frozen=True)
class Case:
    """A complete distribution-system instance (MW, MWh, hours)."""

    T: int
    tau: float
    nodes: tuple
    lines: tuple = ()
    loads: tuple = ()
    gens: tuple = ()
    esses: tuple = ()
    gen_costs: tuple = ()
    ess_costs: tuple = ()
    weights: tuple = ()
    name: str = "case"
    seed: Optional[int] = None

    def __post_init__(self):
        T = self.T
        if not isinstance(T, (int, np.integer)) or T < 1:
            raise CaseValidationError("T", f"period count must be an integer >= 1, got {T!r}")
        if not self.tau > 0:
            raise CaseValidationError("tau", "period length must be positive")
        nodes = tuple(int(n) for n in self.nodes)
        if len(set(nodes)) != len(nodes):
            raise CaseValidationError("nodes", "duplicate node ids")
        if REFERENCE_NODE not in nodes:
            raise CaseValidationError("nodes", f"reference node {REFERENCE_NODE} missing")
        object.__setattr__(self, "nodes", nodes)

        for k, ln in enumerate(self.lines):
            where = f"lines[{k}]"
            if ln.from_node not in nodes or ln.to_node not in nodes:
                raise CaseValidationError(where, "endpoint is not a known node")
            if ln.from_node == ln.to_node:
                raise CaseValidationError(where, "self-loop")
            if not ln.limit > 0:
                raise CaseValidationError(f"{where}.limit", "flow limit must be positive")
            if ln.susceptance == 0:
                raise CaseValidationError(f"{where}.susceptance", "must be nonzero")
        object.__setattr__(self, "lines", tuple(self.lines))

        def devices(items, kind, cls):
            out = []
            for k, d in enumerate(items):
                where = f"{kind}[{k}]"
                if d.node not in nodes:
                    raise CaseValidationError(f"{where}.node", f"unknown node {d.node}")
                lo = _frozen(d.p_min, T, f"{where}.p_min")
                hi = _frozen(d.p_max, T, f"{where}.p_max")
                bad = np.flatnonzero(lo > hi)
                if bad.size:
                    raise CaseValidationError(where, f"p_min > p_max in period {bad[0] + 1}")
                out.append(cls(d.node, lo, hi))
            return tuple(out)

        object.__setattr__(self, "loads", devices(self.loads, "loads", Load))
        object.__setattr__(self, "gens", devices(self.gens, "gens", Generator))
        for k, e in enumerate(self.esses):
            if e.node not in nodes:
                raise CaseValidationError(f"esses[{k}].node", f"unknown node {e.node}")
            e.validate(f"esses[{k}]")
        object.__setattr__(self, "esses", tuple(self.esses))

        gc = tuple(float(c) for c in self.gen_costs) or (0.0,) * len(self.gens)
        ec = tuple(float(c) for c in self.ess_costs) or (0.0,) * len(self.esses)
        if len(gc) != len(self.gens):
            raise CaseValidationError("gen_costs", "one cost per generator required")
        if len(ec) != len(self.esses):
            raise CaseValidationError("ess_costs", "one cost per ESS required")
        object.__setattr__(self, "gen_costs", gc)
        object.__setattr__(self, "ess_costs", ec)

        w = tuple(float(x) for x in self.weights) or (1.0,) * T
        if len(w) != T:
            raise CaseValidationError("weights", f"expected {T} weights, got {len(w)}")
        if any(x < 0 for x in w):
            raise CaseValidationError("weights", "weights must be nonnegative")
        object.__setattr__(self, "weights", w)

    @property
    def n_ess(self) -> int:
        return len(self.esses)

    @property
    def e0(self) -> np.ndarray:
        return np.array([e.e0 for e in self.esses], dtype=float)

    def replace(self, **changes) -> "Case":
        from dataclasses import replace

        return replace(self, **changes)


def ess_energy_delta(p, params: EssParams, tau: float):
    """Stored-energy decrease caused by signed ESS power ``p`` over one period.

    Discharging draws ``p * tau / eta_d`` from storage; charging adds
    ``|p| * tau * eta_c``.  Works elementwise on arrays.
    """
    p = np.asarray(p, dtype=float)
    out = np.maximum(p, 0.0) * tau / params.eta_d + np.minimum(p, 0.0) * tau * params.eta_c
    return out if out.ndim else float(out)


def ess_energy_delta_inv(d, params: EssParams, tau: float):
    """Inverse of :func:`ess_energy_delta`."""
    d = np.asarray(d, dtype=float)
    out = np.where(d > 0, d * params.eta_d / tau, d / (tau * params.eta_c))
    return out if out.ndim else float(out)


def check_general_ess_step(e_prev: float, e_next: float, p: float, params: EssParams, tau: float,
                           tol: float = 1e-9) -> bool:
    """Membership test for the exact (nonconvex) single-step ESS model."""
    if not -params.p_chg_max - tol <= p <= params.p_dis_max + tol:
        return False
    expected = params.kappa * e_prev - ess_energy_delta(p, params, tau)
    return abs(e_next - expected) <= tol


def check_split_ess_step(e_prev: float, e_next: float, p_dis: float, p_chg: float, params: EssParams,
                         tau: float, complementarity: bool = False, mixing: bool = False,
                         tol: float = 1e-9) -> bool:
    """Membership test for the split (charge/discharge) ESS step.

    ``complementarity`` enforces ``p_dis * p_chg == 0``; ``mixing`` enforces the
    convex row ``p_dis / p_dis_max + p_chg / p_chg_max <= 1``.
    """
    if not (-tol <= p_dis <= params.p_dis_max + tol and -tol <= p_chg <= params.p_chg_max + tol):
        return False
    if complementarity and abs(p_dis * p_chg) > tol:
        return False
    if mixing and p_dis / params.p_dis_max + p_chg / params.p_chg_max > 1 + tol:
        return False
    expected = params.kappa * e_prev - p_dis * tau / params.eta_d + p_chg * tau * params.eta_c
    return abs(e_next - expected) <= tol


@dataclass(frozen=True)
class PeriodVars:
    """Global LP column indices of one stamped copy of a period polyhedron."""

    pA: int
    pG: np.ndarray
    pD: np.ndarray
    sD: np.ndarray
    sC: np.ndarray
    pN: np.ndarray
    theta: np.ndarray
    flow: np.ndarray
    offset: int


@dataclass(frozen=True)
class PeriodPolyhedron:
    """Constraint set of one period over local columns.

    Columns: aggregate power, generator outputs, load draws, ESS discharge and
    charge, nodal net injections, bus angles and line flows (in that order).
    Rows: nodal definitions and balances, DC flow equations and the ESS
    mixing rows.  Device limits live in the column bounds.
    """

    t: int
    index: dict
    lb: np.ndarray
    ub: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    cost: np.ndarray
    # per-ESS energy decrease coefficients on (sD, sC)
    delta_dis: np.ndarray
    delta_chg: np.ndarray
    kappa: np.ndarray

    @property
    def n_vars(self) -> int:
        return self.lb.shape[0]

    def add_to(self, builder: LPBuilder, pA_fixed: Optional[float] = None) -> PeriodVars:
        off = builder.add_vars(self.n_vars, self.lb, self.ub)[0]
        builder.add_block(self.A, off, self.sense, self.rhs)
        ix = self.index
        pv = PeriodVars(
            pA=int(off + ix["pA"]),
            pG=off + ix["pG"],
            pD=off + ix["pD"],
            sD=off + ix["sD"],
            sC=off + ix["sC"],
            pN=off + ix["pN"],
            theta=off + ix["theta"],
            flow=off + ix["flow"],
            offset=int(off),
        )
        if pA_fixed is not None:
            builder.bound(pv.pA, pA_fixed, pA_fixed)
        return pv

    def soc_row(self, pv: PeriodVars, i: int):
        """Columns/coefficients of ``-energy_delta_i`` so that
        ``e_next = kappa * e_prev + row``."""
        return (np.array([pv.sD[i], pv.sC[i]]),
                np.array([-self.delta_dis[i], self.delta_chg[i]]))

    def values(self, x: np.ndarray, pv: PeriodVars) -> dict:
        return {
            "pA": float(x[pv.pA]),
            "pG": x[pv.pG].copy(),
            "pD": x[pv.pD].copy(),
            "sD": x[pv.sD].copy(),
            "sC": x[pv.sC].copy(),
            "pN": x[pv.pN].copy(),
            "theta": x[pv.theta].copy(),
            "flow": x[pv.flow].copy(),
        }

    def residual(self, local_x: np.ndarray) -> float:
        """Largest row or bound violation of a local point."""
        ax = self.A @ local_x
        r = np.where(self.sense == EQ, np.abs(ax - self.rhs),
                     np.where(self.sense == LE, np.maximum(ax - self.rhs, 0), np.maximum(self.rhs - ax, 0)))
        b = max(np.maximum(self.lb - local_x, 0).max(initial=0), np.maximum(local_x - self.ub, 0).max(initial=0))
        return float(max(r.max(initial=0), b))

    def local_point(self, vals: dict) -> np.ndarray:
        x = np.zeros(self.n_vars)
        x[self.index["pA"]] = vals["pA"]
        for key in ("pG", "pD", "sD", "sC", "pN", "theta", "flow"):
            x[self.index[key]] = vals[key]
        return x


def build_period_polyhedron(case: Case, t: int, mixing: bool = True) -> PeriodPolyhedron:
    """Assemble the convex constraint set of period ``t`` (1-based).

    Args:
        case: the system.
        t: period index, ``1 <= t <= case.T``.
        mixing: include the ESS mixing rows; ``False`` gives the split model
            without any charge/discharge exclusion.
    """
    if not 1 <= t <= case.T:
        raise CaseValidationError("t", f"period {t} outside 1..{case.T}")
    k = t - 1
    nodes = case.nodes
    node_pos = {n: i for i, n in enumerate(nodes)}
    nG, nD, nS, nN, nL = len(case.gens), len(case.loads), case.n_ess, len(nodes), len(case.lines)
    use_angles = nL > 0

    sizes = [("pA", 1), ("pG", nG), ("pD", nD), ("sD", nS), ("sC", nS), ("pN", nN),
             ("theta", nN if use_angles else 0), ("flow", nL)]
    index, pos = {}, 0
    for name, size in sizes:
        index[name] = np.arange(pos, pos + size)
        pos += size
    index["pA"] = int(index["pA"][0])
    n = pos

    lb = np.full(n, -np.inf)
    ub = np.full(n, np.inf)
    lb[index["pG"]] = [g.p_min[k] for g in case.gens]
    ub[index["pG"]] = [g.p_max[k] for g in case.gens]
    lb[index["pD"]] = [d.p_min[k] for d in case.loads]
    ub[index["pD"]] = [d.p_max[k] for d in case.loads]
    lb[index["sD"]] = 0.0
    ub[index["sD"]] = [e.p_dis_max for e in case.esses]
    lb[index["sC"]] = 0.0
    ub[index["sC"]] = [e.p_chg_max for e in case.esses]
    if use_angles:
        ref = index["theta"][node_pos[REFERENCE_NODE]]
        lb[ref] = ub[ref] = 0.0
    lb[index["flow"]] = [-ln.limit for ln in case.lines]
    ub[index["flow"]] = [ln.limit for ln in case.lines]

    rows, cols, vals, sense, rhs = [], [], [], [], []

    def row(entries, s, r):
        i = len(rhs)
        for c, v in entries:
            rows.append(i)
            cols.append(c)
            vals.append(v)
        sense.append(s)
        rhs.append(r)

    # nodal injection into the network: pN_i = G_i + S_i - D_i (+ pA at the reference)
    for ni, node in enumerate(nodes):
        ent = [(index["pN"][ni], 1.0)]
        ent += [(index["pG"][j], -1.0) for j, g in enumerate(case.gens) if g.node == node]
        ent += [(index["pD"][j], 1.0) for j, d in enumerate(case.loads) if d.node == node]
        for j, e in enumerate(case.esses):
            if e.node == node:
                ent += [(index["sD"][j], -1.0), (index["sC"][j], 1.0)]
        if node == REFERENCE_NODE:
            ent.append((index["pA"], -1.0))
        row(ent, EQ, 0.0)
    # balance: injection equals net outgoing line flow
    for ni, node in enumerate(nodes):
        ent = [(index["pN"][ni], 1.0)]
        for li, ln in enumerate(case.lines):
            if ln.from_node == node:
                ent.append((index["flow"][li], -1.0))
            elif ln.to_node == node:
                ent.append((index["flow"][li], 1.0))
        row(ent, EQ, 0.0)
    # DC flow: f = b (theta_from - theta_to)
    for li, ln in enumerate(case.lines):
        row([(index["flow"][li], 1.0),
             (index["theta"][node_pos[ln.from_node]], -ln.susceptance),
             (index["theta"][node_pos[ln.to_node]], ln.susceptance)], EQ, 0.0)
    if mixing:
        for j, e in enumerate(case.esses):
            row([(index["sD"][j], 1.0 / e.p_dis_max), (index["sC"][j], 1.0 / e.p_chg_max)], LE, 1.0)

    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(rhs), n))
    cost = np.zeros(n)
    cost[index["pG"]] = np.array(case.gen_costs) * case.tau
    cost[index["sD"]] = np.array(case.ess_costs) * case.tau
    cost[index["sC"]] = np.array(case.ess_costs) * case.tau
    tau = case.tau
    return PeriodPolyhedron(
        t=t,
        index=index,
        lb=lb,
        ub=ub,
        A=A,
        sense=np.array(sense, dtype="<U1"),
        rhs=np.array(rhs, dtype=float),
        cost=cost,
        delta_dis=np.array([tau / e.eta_d for e in case.esses]),
        delta_chg=np.array([tau * e.eta_c for e in case.esses]),
        kappa=np.array([e.kappa for e in case.esses]),
    )


def aggregate_interval(case: Case, t: int, soc_prev: Optional[Sequence[float]] = None,
                       mixing: bool = True, backend: Optional[str] = None) -> tuple[float, float]:
    """Range of aggregate power in period ``t`` reachable from ``soc_prev``.

    The next SoC must stay within the energy bounds.  ``soc_prev`` defaults to
    the initial SoC.  Returns ``(nan, nan)`` when no dispatch exists.
    """
    poly = build_period_polyhedron(case, t, mixing)
    soc_prev = case.e0 if soc_prev is None else np.asarray(soc_prev, dtype=float)
    out = []
    for maximize in (False, True):
        b = LPBuilder()
        pv = poly.add_to(b)
        _add_soc_rows(b, poly, pv, case, soc_prev)
        b.add_objective([pv.pA], [1.0])
        res = solve(b.build(maximize=maximize), backend)
        if not res.optimal:
            return float("nan"), float("nan")
        out.append(res.objective)
    return out[0], out[1]


def _add_soc_rows(b: LPBuilder, poly: PeriodPolyhedron, pv: PeriodVars, case: Case, soc_prev):
    for i, e in enumerate(case.esses):
        cols, coefs = poly.soc_row(pv, i)
        base = e.kappa * soc_prev[i]
        b.add_range(cols, coefs, e.e_min - base, e.e_max - base)


def exact_aggregate_interval(case: Case, t: int, soc_prev: Optional[Sequence[float]] = None,
                             backend: Optional[str] = None) -> tuple[float, float]:
    """Aggregate-power range under the exact complementarity ESS model.

    Each ESS either only discharges or only charges; the union over all
    ``2**n_ess`` branches is taken, each branch being an LP.  Intended for a
    handful of ESSs.
    """
    poly = build_period_polyhedron(case, t, mixing=False)
    soc_prev = case.e0 if soc_prev is None else np.asarray(soc_prev, dtype=float)
    lo, hi = np.inf, -np.inf
    for branch in itertools.product((0, 1), repeat=case.n_ess):
        for maximize in (False, True):
            b = LPBuilder()
            pv = poly.add_to(b)
            for i, charging in enumerate(branch):
                b.bound(int(pv.sD[i] if charging else pv.sC[i]), 0.0, 0.0)
            _add_soc_rows(b, poly, pv, case, soc_prev)
            b.add_objective([pv.pA], [1.0])
            res = solve(b.build(maximize=maximize), backend)
            if res.optimal:
                lo, hi = (min(lo, res.objective), hi) if not maximize else (lo, max(hi, res.objective))
    if lo > hi:
        return float("nan"), float("nan")
    return float(lo), float(hi)
