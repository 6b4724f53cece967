"""Setpoint sampling and side-by-side comparison of models and strategies."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .aggregation import MODELS, AggregationResult, FlexBand, aggregate, ordering_violations
from .disaggregation import DEFAULT_STRATEGY, DisaggregationError, parse_strategy, run_rolling
from .model import Case

SAMPLE_MODES = ("uniform", "vertex", "adversarial")
# models whose bands come with a causal dispatch guarantee
NONANTICIPATIVE = ("envelope", "single_ess", "rectangular", "enumeration")
_STRATEGY_MODEL = {"enumeration": "enumeration", "rectangular": "rectangular", "envelope": "envelope"}


class OrderingError(AssertionError):
    """Model objectives break the expected nesting."""


def sample_trajectory(band: FlexBand, seed: int, mode: str = "uniform") -> np.ndarray:
    """One setpoint per period drawn from ``band``.

    Args:
        band: band to sample from.
        seed: RNG seed; equal seeds give equal trajectories.
        mode: ``"uniform"`` draws each period independently and uniformly;
            ``"vertex"`` picks a random endpoint per period; ``"adversarial"``
            holds one endpoint for the first half and the other for the rest,
            which pushes the SoC as far as the band allows.  The seed picks
            which endpoint comes first.
    """
    rng = np.random.default_rng(seed)
    if mode == "uniform":
        return rng.uniform(band.lower, band.upper)
    if mode == "vertex":
        return band.vertex(rng.integers(0, 2, band.T))
    if mode == "adversarial":
        first = int(rng.integers(0, 2))
        half = math.ceil(band.T / 2)
        pattern = [first] * half + [1 - first] * (band.T - half)
        return band.vertex(pattern)
    raise ValueError(f"unknown sampling mode {mode!r}; choose from {', '.join(SAMPLE_MODES)}")


def trajectory_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


@dataclass
class StrategySummary:
    strategy: str
    model: str
    n: int = 0
    completed: int = 0
    total_cost: float = 0.0
    step_time: float = 0.0
    steps: int = 0
    costs: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def feasibility_rate(self) -> float:
        return self.completed / self.n if self.n else float("nan")

    @property
    def average_cost(self) -> float:
        return self.total_cost / self.completed if self.completed else float("nan")

    @property
    def average_step_time(self) -> float:
        return self.step_time / self.steps if self.steps else float("nan")


@dataclass
class ComparisonReport:
    case_name: str
    seed: int
    n_traj: int
    results: dict
    intersection: Optional[FlexBand]
    strategies: dict
    trajectories: list

    @property
    def objectives(self) -> dict:
        return {m: r.objective for m, r in self.results.items()}

    def to_dict(self) -> dict:
        """Deterministic part of the report (no timings)."""
        return {
            "format_version": 1,
            "kind": "comparison_report",
            "units": {"power": "MW", "energy": "MWh", "time": "h", "cost": "$"},
            "case": self.case_name,
            "seed": self.seed,
            "n_traj": self.n_traj,
            "models": {
                m: {"objective": r.objective, "band": {"lower": r.band.lower, "upper": r.band.upper},
                    "lp_vars": r.stats.get("lp_vars"), "lp_rows": r.stats.get("lp_rows")}
                for m, r in self.results.items()
            },
            "intersection": None if self.intersection is None else
            {"lower": self.intersection.lower, "upper": self.intersection.upper},
            "strategies": {
                s: {"model": v.model, "n": v.n, "completed": v.completed, "feasibility_rate": v.feasibility_rate,
                    "average_cost": v.average_cost, "failures": v.failures}
                for s, v in self.strategies.items()
            },
            "cost_reduction_vs_baseline": self.cost_reductions(),
        }

    def timing_dict(self) -> dict:
        return {
            "models": {m: r.stats.get("wall_time") for m, r in self.results.items()},
            "average_step_time": {s: v.average_step_time for s, v in self.strategies.items()},
        }

    def cost_reductions(self) -> dict:
        """Relative saving of each cost-minimizing strategy over its baseline, paired by trajectory."""
        out = {}
        for s, v in self.strategies.items():
            base = self.strategies.get(f"{s}-baseline")
            if base is None or s.endswith("-baseline"):
                continue
            pairs = [(a, b) for a, b in zip(v.costs, base.costs) if a is not None and b is not None]
            if not pairs:
                continue
            g = float(np.mean([a for a, _ in pairs]))
            b = float(np.mean([b for _, b in pairs]))
            out[s] = {"greedy": g, "baseline": b, "reduction": (b - g) / b if b > 0 else 0.0}
        return out


def _applicable(case: Case, models: Optional[Sequence[str]]) -> list:
    if models is None:
        return [m for m in MODELS if m != "single_ess" or case.n_ess == 1]
    return list(models)


def run_comparison(case: Case, models: Optional[Sequence[str]] = None, strategies: Sequence[str] = (),
                   n_traj: int = 100, seed: int = 0, modes: Sequence[str] = ("uniform", "vertex"),
                   mode: str = "full", backend: Optional[str] = None) -> ComparisonReport:
    """Aggregate with every model, then replay shared trajectories through every strategy.

    Trajectories are drawn from the intersection of the nonanticipative
    models' bands, so every strategy sees the same setpoints.  Trajectory
    ``k`` uses sampling mode ``modes[k % len(modes)]``.

    Args:
        case: the system.
        models: model names; default all that apply to the case.
        strategies: disaggregation strategies, each optionally suffixed
            with ``-baseline``.
        n_traj: number of trajectories (0 for aggregation only).
        seed: master seed.
        modes: sampling modes to cycle through.
        mode: ``"full"`` or ``"lazy"`` for the models that support it.
        backend: LP backend name.

    Raises:
        OrderingError: objectives break the expected nesting.
        EmptyIntersectionError: the nonanticipative bands share no trajectory.
    """
    results = {}
    for m in _applicable(case, models):
        results[m] = aggregate(case, m, mode, backend)
    bad = ordering_violations({m: r.objective for m, r in results.items()})
    if bad:
        raise OrderingError(f"objective ordering violated for {bad}")

    inner = [m for m in NONANTICIPATIVE if m in results]
    intersection = None
    if inner:
        intersection = results[inner[0]].band
        for m in inner[1:]:
            intersection = intersection.intersect(results[m].band)
    elif results:
        intersection = next(iter(results.values())).band

    summaries = {}
    trajectories = []
    if n_traj and strategies:
        if intersection is None:
            raise ValueError("strategies need at least one model")
        for k in range(n_traj):
            trajectories.append(sample_trajectory(intersection, trajectory_seed(seed, k), modes[k % len(modes)]))
        common = AggregationResult("intersection", intersection, 0.0, case.weights)
        for s in strategies:
            name, _ = parse_strategy(s)
            owner = _STRATEGY_MODEL.get(name)
            if owner == "rectangular" and owner not in results and "single_ess" in results:
                owner = "single_ess"
            if owner is not None and owner not in results:
                raise ValueError(f"strategy {s!r} needs the {owner!r} model")
            res = results[owner] if owner else common
            summ = StrategySummary(s, res.model)
            for k, traj in enumerate(trajectories):
                summ.n += 1
                t0 = time.perf_counter()
                try:
                    log = run_rolling(case, res, traj, s, backend)
                except DisaggregationError as exc:
                    summ.failures.append({"trajectory": k, "period": exc.period, "message": str(exc)})
                    summ.costs.append(None)
                    continue
                summ.step_time += time.perf_counter() - t0
                summ.steps += case.T
                summ.completed += 1
                summ.total_cost += log.total_cost
                summ.costs.append(log.total_cost)
            summaries[s] = summ
    return ComparisonReport(case.name, seed, n_traj, results, intersection, summaries, trajectories)


__all__ = ["ComparisonReport", "DEFAULT_STRATEGY", "OrderingError", "StrategySummary", "run_comparison",
           "sample_trajectory", "trajectory_seed"]
