"""Rolling disaggregation: turn each revealed aggregate setpoint into a
device dispatch, one period at a time, without seeing future setpoints.

Each strategy minimizes the current period's operating cost subject to the
current period's constraints plus a strategy-specific guarantee that every
future in-band setpoint stays servable:

* ``enumeration``: a scenario subtree over the remaining band endpoints.
* ``rectangular``: the next SoC must land in the SoC box.
* ``envelope``: ESS charge/discharge must stay inside the power envelopes.
* ``myopic``: only the energy bounds (no future guarantee).

Appending ``-baseline`` to a strategy keeps the same feasible set but drops
the cost objective, giving the reference point for cost comparisons.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .aggregation import AggregationResult, Envelopes, FlexBand, PreconditionError, SocBox
from .lp import EQ, LPBuilder, Status, solve
from .model import Case, PeriodPolyhedron, build_period_polyhedron
from .scenario import DEFAULT_LEAF_CAP, ScenarioSizeError

log = logging.getLogger(__name__)

SETPOINT_REL_TOL = 1e-6
RESIDUAL_TOL = 1e-7
STRATEGIES = ("enumeration", "rectangular", "envelope", "myopic")


class DisaggregationError(RuntimeError):
    """Rolling dispatch stopped; ``period`` is the 1-based period concerned."""

    def __init__(self, message: str, period: int):
        super().__init__(message)
        self.period = period


class SetpointOutOfBandError(DisaggregationError):
    def __init__(self, period: int, setpoint: float, bound: float, side: str):
        super().__init__(f"period {period}: setpoint {setpoint:.12g} violates the {side} bound {bound:.12g}",
                         period)
        self.setpoint = setpoint
        self.bound = bound
        self.side = side


class DispatchInfeasibleError(DisaggregationError):
    """No dispatch serves an accepted setpoint while keeping the strategy's guarantee."""


@dataclass
class RollingState:
    """Mutable state of one rolling run."""

    case: Case
    band: FlexBand
    certificate: object
    t0: int
    soc: np.ndarray
    prefix: list = field(default_factory=list)

    @classmethod
    def start(cls, case: Case, result: AggregationResult) -> "RollingState":
        return cls(case, result.band, result.certificate, 1, case.e0.copy())


@dataclass(frozen=True)
class PeriodDispatch:
    period: int
    setpoint: float
    served: float  # aggregate power actually dispatched; equals setpoint up to round-off
    pG: np.ndarray
    pD: np.ndarray
    sD: np.ndarray
    sC: np.ndarray
    flow: np.ndarray
    soc: np.ndarray
    cost: float
    residual: float
    step_time: float

    @property
    def ess_power(self) -> np.ndarray:
        return self.sD - self.sC


@dataclass
class DispatchLog:
    case_name: str
    strategy: str
    periods: list = field(default_factory=list)
    e0: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def total_cost(self) -> float:
        return float(sum(p.cost for p in self.periods))

    @property
    def soc_trajectory(self) -> np.ndarray:
        """SoC per ESS, column 0 being the initial state."""
        cols = [self.e0] + [p.soc for p in self.periods]
        return np.column_stack(cols) if len(self.e0) else np.zeros((0, len(cols)))

    @property
    def max_residual(self) -> float:
        return max((p.residual for p in self.periods), default=0.0)


def _check_setpoint(band: FlexBand, t: int, setpoint: float) -> float:
    lo, hi = band.lower[t - 1], band.upper[t - 1]
    if setpoint < lo:
        if lo - setpoint > SETPOINT_REL_TOL * max(1.0, abs(lo)):
            raise SetpointOutOfBandError(t, setpoint, lo, "lower")
        log.warning("period %d: setpoint %.12g clamped up to %.12g", t, setpoint, lo)
        return float(lo)
    if setpoint > hi:
        if setpoint - hi > SETPOINT_REL_TOL * max(1.0, abs(hi)):
            raise SetpointOutOfBandError(t, setpoint, hi, "upper")
        log.warning("period %d: setpoint %.12g clamped down to %.12g", t, setpoint, hi)
        return float(hi)
    return float(setpoint)


def _soc_expr(poly: PeriodPolyhedron, pv, i: int, case: Case, soc_prev):
    cols, coefs = poly.soc_row(pv, i)
    return cols, coefs, case.esses[i].kappa * soc_prev[i]


# Band endpoints and certificates come out of LPs solved to ~1e-9, so a
# guarantee can be tight to within round-off.  Each step first solves with
# the small slack and retries once with the larger one before giving up.
STEP_SLACKS = (1e-9, 1e-7)


def _widen(lo: float, hi: float, slack: float) -> tuple[float, float]:
    return lo - slack * max(1.0, abs(lo)), hi + slack * max(1.0, abs(hi))


def _solve_step(state: RollingState, setpoint: float, build, backend, with_cost: bool, what: str) -> PeriodDispatch:
    case, t = state.case, state.t0
    t_start = time.perf_counter()
    poly = build_period_polyhedron(case, t)
    for slack in STEP_SLACKS:
        b = LPBuilder()
        pv = poly.add_to(b)
        b.bound(pv.pA, *_widen(setpoint, setpoint, slack))
        if with_cost:
            b.add_objective(np.arange(pv.offset, pv.offset + poly.n_vars), poly.cost)
        build(poly, b, pv, slack)
        res = solve(b.build(), backend)
        if res.status is Status.OPTIMAL:
            break
    else:
        raise DispatchInfeasibleError(f"period {t}: no dispatch serves setpoint {setpoint:.12g} {what}", t)
    local = res.x[pv.offset:pv.offset + poly.n_vars]
    vals = poly.values(res.x, pv)
    soc = np.array([e.kappa * state.soc[i] - poly.delta_dis[i] * vals["sD"][i] + poly.delta_chg[i] * vals["sC"][i]
                    for i, e in enumerate(case.esses)])
    return PeriodDispatch(
        period=t, setpoint=setpoint, served=vals["pA"], pG=vals["pG"], pD=vals["pD"], sD=vals["sD"], sC=vals["sC"],
        flow=vals["flow"], soc=soc, cost=float(poly.cost @ local), residual=poly.residual(local),
        step_time=time.perf_counter() - t_start,
    )


def disagg_myopic_step(state: RollingState, setpoint: float, backend: Optional[str] = None,
                       with_cost: bool = True) -> PeriodDispatch:
    """Cheapest dispatch that keeps the next SoC within its energy bounds."""
    setpoint = _check_setpoint(state.band, state.t0, setpoint)
    case = state.case

    def build(poly, b, pv, slack):
        for i, e in enumerate(case.esses):
            cols, coefs, base = _soc_expr(poly, pv, i, case, state.soc)
            b.add_range(cols, coefs, e.e_min - base, e.e_max - base)

    return _solve_step(state, setpoint, build, backend, with_cost, "within the energy bounds")


def disagg_rectangular_step(state: RollingState, setpoint: float, backend: Optional[str] = None,
                            with_cost: bool = True) -> PeriodDispatch:
    """Cheapest dispatch whose next SoC lies in the SoC box of this period."""
    box = state.certificate
    if not isinstance(box, SocBox):
        raise PreconditionError("rectangular disaggregation needs a SoC-box certificate")
    t = state.t0
    setpoint = _check_setpoint(state.band, t, setpoint)
    case = state.case

    def build(poly, b, pv, slack):
        for i in range(case.n_ess):
            cols, coefs, base = _soc_expr(poly, pv, i, case, state.soc)
            e = case.esses[i]
            lo, hi = _widen(box.lo[i, t], box.hi[i, t], slack)
            lo, hi = max(lo, e.e_min), min(hi, e.e_max)
            b.add_range(cols, coefs, lo - base, hi - base)

    return _solve_step(state, setpoint, build, backend, with_cost, "inside the SoC box")


def disagg_envelope_step(state: RollingState, setpoint: float, backend: Optional[str] = None,
                         with_cost: bool = True) -> PeriodDispatch:
    """Cheapest dispatch with every ESS inside its power envelopes."""
    env = state.certificate
    if not isinstance(env, Envelopes):
        raise PreconditionError("envelope disaggregation needs an envelope certificate")
    k = state.t0 - 1
    setpoint = _check_setpoint(state.band, state.t0, setpoint)
    case = state.case

    def build(poly, b, pv, slack):
        for i, e in enumerate(case.esses):
            # sorted so round-off in the envelope LP cannot invert a bound pair
            d = _widen(*sorted((env.d_lo[i, k], env.d_hi[i, k])), slack)
            c = _widen(*sorted((env.c_hi[i, k], env.c_lo[i, k])), slack)
            b.bound(int(pv.sD[i]), max(d[0], 0.0), min(d[1], e.p_dis_max))
            b.bound(int(pv.sC[i]), max(c[0], 0.0), min(c[1], e.p_chg_max))

    return _solve_step(state, setpoint, build, backend, with_cost, "inside the ESS envelopes")


def disagg_enumeration_step(state: RollingState, setpoint: float, backend: Optional[str] = None,
                            with_cost: bool = True, cap: int = DEFAULT_LEAF_CAP) -> PeriodDispatch:
    """Cheapest dispatch from which every remaining endpoint pattern of the
    band has a causal continuation (a scenario subtree over the future periods)."""
    case, t = state.case, state.t0
    setpoint = _check_setpoint(state.band, t, setpoint)
    depth = case.T - t
    if (1 << depth) > cap:
        raise ScenarioSizeError(f"lookahead tree of 2^{depth} leaves exceeds cap {cap}")
    future = [build_period_polyhedron(case, tt) for tt in range(t + 1, case.T + 1)]

    def build(poly, b, pv, slack):
        def soc_vars(p, pvars, prev_cols):
            out = []
            for i, e in enumerate(case.esses):
                # the realized SoC keeps exact bounds; only look-ahead states get slack
                ev = b.add_var(*((e.e_min, e.e_max) if prev_cols is None else _widen(e.e_min, e.e_max, slack)))
                cols, coefs = p.soc_row(pvars, i)
                if prev_cols is None:
                    b.add_row(np.r_[ev, cols], np.r_[1.0, -coefs], EQ, e.kappa * state.soc[i])
                else:
                    b.add_row(np.r_[ev, prev_cols[i], cols], np.r_[1.0, -e.kappa, -coefs], EQ, 0.0)
                out.append(ev)
            return out

        level = {0: soc_vars(poly, pv, None)}
        for d, fut in enumerate(future, start=1):
            lo, hi = state.band.lower[t + d - 1], state.band.upper[t + d - 1]
            nxt = {}
            for bits in range(1 << d):
                fv = fut.add_to(b)
                p = hi if bits & 1 else lo
                b.bound(fv.pA, *_widen(p, p, slack))
                nxt[bits] = soc_vars(fut, fv, level[bits >> 1])
            level = nxt

    return _solve_step(state, setpoint, build, backend, with_cost,
                       "with a causal continuation for all future band endpoints")


_STEPS = {
    "enumeration": disagg_enumeration_step,
    "rectangular": disagg_rectangular_step,
    "envelope": disagg_envelope_step,
    "myopic": disagg_myopic_step,
}

DEFAULT_STRATEGY = {
    "enumeration": "enumeration",
    "rectangular": "rectangular",
    "single_ess": "rectangular",
    "envelope": "envelope",
    "two_stage": "myopic",
    "outer": "myopic",
}


def parse_strategy(strategy: str) -> tuple[str, bool]:
    """Split ``name[-baseline]`` into the step name and whether cost is minimized."""
    base, _, suffix = strategy.partition("-")
    if base not in _STEPS or suffix not in ("", "baseline"):
        raise ValueError(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)} "
                         "optionally suffixed with -baseline")
    return base, suffix != "baseline"


def advance(state: RollingState, dispatch: PeriodDispatch) -> None:
    state.soc = dispatch.soc
    state.prefix.append(dispatch.setpoint)
    state.t0 += 1


def run_rolling(case: Case, result: AggregationResult, trajectory, strategy: Optional[str] = None,
                backend: Optional[str] = None) -> DispatchLog:
    """Serve ``trajectory`` period by period with the chosen strategy.

    Args:
        case: the system the band was computed for.
        result: aggregation output supplying the band and certificate.
        trajectory: one setpoint per period (MW).
        strategy: step rule, default chosen from the aggregation model.
        backend: LP backend name.

    Raises:
        SetpointOutOfBandError: a setpoint lies outside the band beyond tolerance.
        DispatchInfeasibleError: no dispatch keeps the strategy's guarantee.
    """
    strategy = strategy or DEFAULT_STRATEGY[result.model]
    name, with_cost = parse_strategy(strategy)
    traj = np.asarray(trajectory, dtype=float).reshape(-1)
    if traj.size != case.T:
        raise ValueError(f"trajectory has {traj.size} setpoints, case has {case.T} periods")
    step = _STEPS[name]
    state = RollingState.start(case, result)
    out = DispatchLog(case.name, strategy, e0=case.e0.copy())
    for p in traj:
        d = step(state, float(p), backend, with_cost=with_cost)
        if d.residual > RESIDUAL_TOL:
            raise DispatchInfeasibleError(f"period {d.period}: dispatch residual {d.residual:.3g}", d.period)
        out.periods.append(d)
        advance(state, d)
    return out
