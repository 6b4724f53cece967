"""Built-in cases: three tiny fixtures, two synthetic systems and a seeded
random generator for property tests.

The synthetic systems use fixed, hand-picked parameters so results are
reproducible; see the per-function docstrings for what is fixed.
"""

from __future__ import annotations

import numpy as np

from .model import Case, EssParams, Generator, Line, Load


def example1() -> Case:
    """One node, one lossy ESS (90% efficiency both ways), a single period."""
    ess = EssParams(node=1, kappa=1.0, eta_d=0.9, eta_c=0.9, p_dis_max=1.0, p_chg_max=1.0,
                    e_min=0.0, e_max=1.0, e0=1.0)
    return Case(T=1, tau=1.0, nodes=(1,), esses=(ess,), name="example1")


def example2() -> Case:
    """Two nodes joined by a 1 MW line; node 2 holds an ESS, a DG and a load.

    The DG and load are only active in period 1, so period 2 flexibility
    comes from the ESS alone.
    """
    ess = EssParams(node=2, p_dis_max=1.0, p_chg_max=1.0, e_min=0.0, e_max=1.0, e0=1.0)
    return Case(
        T=2,
        tau=1.0,
        nodes=(1, 2),
        lines=(Line(1, 2, susceptance=10.0, limit=1.0),),
        loads=(Load(2, [0.0, 0.0], [2.0, 0.0]),),
        gens=(Generator(2, [0.0, 0.0], [1.0, 0.0]),),
        esses=(ess,),
        weights=(1.0, 1.0),
        name="example2",
    )


def example3() -> Case:
    """Single node, empty ideal ESS and a DG that can only produce in period 2.

    Weights (2, 1, 2) make it worth spending part of the DG range on
    recharging the ESS for period 3.
    """
    ess = EssParams(node=1, p_dis_max=1.0, p_chg_max=1.0, e_min=0.0, e_max=1.0, e0=0.0)
    return Case(
        T=3,
        tau=1.0,
        nodes=(1,),
        gens=(Generator(1, [0.0, 0.0, 0.0], [0.0, 2.0, 0.0]),),
        esses=(ess,),
        weights=(2.0, 1.0, 2.0),
        name="example3",
    )


def no_ess_case(T: int = 2) -> Case:
    """One node, one DG with range [0, 1] MW, no storage."""
    return Case(T=T, tau=1.0, nodes=(1,), gens=(Generator(1, [0.0] * T, [1.0] * T),), name="no_ess")


# Daily shape used by the synthetic systems, sampled at T points.
def _profile(T: int, lo: float, hi: float, phase: float = 0.0) -> np.ndarray:
    h = (np.arange(T) + 0.5) / T * 24.0
    shape = 0.5 - 0.5 * np.cos(2 * np.pi * (h - 4.0 - phase) / 24.0)
    return lo + (hi - lo) * shape


def toy5(T: int = 8, n_ess: int = 2) -> Case:
    """Five-node meshed system (PJM-5 topology) with up to five ESSs.

    Loads sit at nodes 2-4 with a +/-30% flexible range around a daily
    profile, DGs at nodes 3 and 5, ESSs cycle through nodes 2, 3, 4, 5, 2.
    Susceptances follow the usual PJM-5 reactances; limits are in MW.
    """
    if not 0 <= n_ess <= 5:
        raise ValueError("toy5 supports 0..5 ESSs")
    reactance = [0.0281, 0.0304, 0.0064, 0.0108, 0.0297, 0.0297]
    ends = [(1, 2), (1, 4), (1, 5), (2, 3), (3, 4), (4, 5)]
    limits = [4.0, 3.0, 4.0, 3.0, 2.5, 2.5]
    lines = tuple(Line(a, b, 1.0 / x, lim) for (a, b), x, lim in zip(ends, reactance, limits))
    loads = []
    for node, base in ((2, 2.0), (3, 2.5), (4, 3.0)):
        prof = _profile(T, 0.6 * base, base)
        loads.append(Load(node, 0.7 * prof, 1.3 * prof))
    gens = (
        Generator(3, np.zeros(T), _profile(T, 0.0, 1.5, phase=8.0)),
        Generator(5, np.full(T, 0.2), np.full(T, 1.2)),
    )
    ess_nodes = [2, 3, 4, 5, 2][:n_ess]
    esses = tuple(
        EssParams(node=n, kappa=0.99, eta_d=0.95, eta_c=0.95, p_dis_max=0.5, p_chg_max=0.5,
                  e_min=0.1, e_max=1.5, e0=round(0.6 + 0.1 * k, 6))
        for k, n in enumerate(ess_nodes)
    )
    weights = _fixed_weights(T)
    return Case(T=T, tau=1.0, nodes=(1, 2, 3, 4, 5), lines=lines, loads=tuple(loads), gens=gens,
                esses=esses, gen_costs=(30.0, 45.0), ess_costs=(3.0,) * n_ess, weights=weights,
                name=f"toy5-{n_ess}ess")


_IEEE33_BRANCHES = [
    (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8), (8, 9), (9, 10), (10, 11), (11, 12),
    (12, 13), (13, 14), (14, 15), (15, 16), (16, 17), (17, 18), (2, 19), (19, 20), (20, 21),
    (21, 22), (3, 23), (23, 24), (24, 25), (6, 26), (26, 27), (27, 28), (28, 29), (29, 30),
    (30, 31), (31, 32), (32, 33),
]
_IEEE33_LOAD_KW = [0, 100, 90, 120, 60, 60, 200, 200, 60, 60, 45, 60, 60, 120, 60, 60, 60, 90, 90, 90,
                   90, 90, 90, 420, 420, 60, 60, 60, 120, 200, 150, 210, 60]


def toy33(T: int = 8, n_ess: int = 3) -> Case:
    """33-node radial feeder (IEEE-33 topology) with DGs and up to six ESSs.

    Loads are the standard nominal values scaled to MW with a +/-20%
    flexible range; PV-like DGs at nodes 18, 22, 25 and 33; ESSs at
    nodes 18, 25, 33, 14, 30, 22.  Line limits are 1.2x the downstream
    peak load plus 0.3 MW.
    """
    if not 0 <= n_ess <= 6:
        raise ValueError("toy33 supports 0..6 ESSs")
    nodes = tuple(range(1, 34))
    children = {n: [] for n in nodes}
    for a, b in _IEEE33_BRANCHES:
        children[a].append(b)

    def downstream(n):
        return _IEEE33_LOAD_KW[n - 1] / 1000.0 + sum(downstream(c) for c in children[n])

    lines = tuple(Line(a, b, 20.0, round(1.2 * 1.2 * downstream(b) + 0.3, 3)) for a, b in _IEEE33_BRANCHES)
    loads = []
    for n in nodes[1:]:
        base = _IEEE33_LOAD_KW[n - 1] / 1000.0
        prof = _profile(T, 0.6 * base, base)
        loads.append(Load(n, 0.8 * prof, 1.2 * prof))
    gens = tuple(Generator(n, np.zeros(T), _profile(T, 0.0, cap, phase=8.0))
                 for n, cap in ((18, 0.4), (22, 0.3), (25, 0.5), (33, 0.4)))
    ess_nodes = [18, 25, 33, 14, 30, 22][:n_ess]
    esses = tuple(
        EssParams(node=n, kappa=0.995, eta_d=0.95, eta_c=0.95, p_dis_max=0.3, p_chg_max=0.3,
                  e_min=0.1, e_max=1.0, e0=0.5)
        for n in ess_nodes
    )
    return Case(T=T, tau=1.0, nodes=nodes, lines=lines, loads=tuple(loads), gens=gens, esses=esses,
                gen_costs=(20.0, 25.0, 22.0, 28.0), ess_costs=(4.0,) * n_ess,
                weights=_fixed_weights(T), name=f"toy33-{n_ess}ess")


def _fixed_weights(T: int) -> tuple:
    # explicit, reproducible weights in [0.2, 1]
    base = [0.9, 0.4, 0.7, 1.0, 0.3, 0.8, 0.6, 0.5, 0.2, 0.9, 0.7, 0.4]
    return tuple(base[k % len(base)] for k in range(T))


def random_case(seed: int, T: int | None = None, n_ess: int | None = None, n_nodes: int | None = None,
                ideal: bool = False) -> Case:
    """Seeded random radial case with up to 5 nodes and 3 ESSs.

    Line limits always cover the downstream minimum load and minimum
    generation, so a dispatch exists in every period.

    Args:
        seed: RNG seed; the same seed always gives the same case.
        T: number of periods (random in 2..6 when omitted).
        n_ess: number of ESSs (random in 0..3 when omitted).
        n_nodes: number of nodes (random in 1..5 when omitted).
        ideal: force lossless ESSs with no dissipation.
    """
    rng = np.random.default_rng(seed)
    T = int(rng.integers(2, 7)) if T is None else T
    n_nodes = int(rng.integers(1, 6)) if n_nodes is None else n_nodes
    n_ess = int(rng.integers(0, 4)) if n_ess is None else n_ess
    nodes = tuple(range(1, n_nodes + 1))
    parent = {n: int(rng.integers(1, n)) for n in nodes[1:]}

    loads, gens = [], []
    for n in nodes:
        if rng.random() < 0.7:
            lo = rng.uniform(0.0, 1.0, T)
            loads.append(Load(n, lo, lo + rng.uniform(0.0, 1.0, T)))
        if rng.random() < 0.6:
            lo = rng.uniform(0.0, 0.3, T)
            gens.append(Generator(n, lo, lo + rng.uniform(0.0, 1.5, T)))
    esses = []
    for _ in range(n_ess):
        e_min = round(float(rng.uniform(0.0, 0.3)), 3)
        e_max = round(e_min + float(rng.uniform(0.5, 2.0)), 3)
        eff = (1.0, 1.0) if ideal else (round(float(rng.uniform(0.85, 1.0)), 3), round(float(rng.uniform(0.85, 1.0)), 3))
        esses.append(EssParams(
            node=int(rng.choice(nodes)),
            kappa=1.0 if ideal else round(float(rng.uniform(0.95, 1.0)), 3),
            eta_d=eff[0], eta_c=eff[1],
            p_dis_max=round(float(rng.uniform(0.3, 1.2)), 3),
            p_chg_max=round(float(rng.uniform(0.3, 1.2)), 3),
            e_min=e_min, e_max=e_max,
            e0=round(float(rng.uniform(e_min, e_max)), 3),
        ))

    def subtree(n):
        out = [n]
        for c, p in parent.items():
            if p == n:
                out += subtree(c)
        return out

    lines = []
    for child, par in parent.items():
        sub = set(subtree(child))
        need_load = sum(ld.p_min for ld in loads if ld.node in sub)
        need_gen = sum(g.p_min for g in gens if g.node in sub)
        base = float(np.max(np.maximum(need_load, need_gen), initial=0.0))
        lines.append(Line(par, child, round(float(rng.uniform(5.0, 20.0)), 3),
                          round(base + float(rng.uniform(0.3, 1.5)), 3)))
    weights = tuple(round(float(w), 3) for w in rng.uniform(0.1, 1.0, T))
    return Case(
        T=T, tau=1.0, nodes=nodes, lines=tuple(lines), loads=tuple(loads), gens=tuple(gens),
        esses=tuple(esses),
        gen_costs=tuple(round(float(c), 2) for c in rng.uniform(10.0, 60.0, len(gens))),
        ess_costs=tuple(round(float(c), 2) for c in rng.uniform(1.0, 5.0, len(esses))),
        weights=weights, name=f"random-{seed}", seed=seed,
    )


BUILTIN = {
    "example1": example1,
    "example2": example2,
    "example3": example3,
    "toy5": toy5,
    "toy33": toy33,
}
