import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexagg.aggregation import (MODELS, EmptyIntersectionError, Envelopes, FlexBand, InfeasibleCaseError,
                                 PreconditionError, ScenarioSolution, SocBox, aggregate, flexibility_index,
                                 ordering_violations, rectangular_violations, solve_envelope, trajectory_feasible)
from flexagg.cases import example1, example2, example3, no_ess_case, random_case, toy5
from flexagg.model import Case, EssParams
from flexagg.scenario import ScenarioSizeError

EXAMPLE2 = dict(envelope=3, single_ess=3, rectangular=3, enumeration=3, two_stage=4, outer=4)
EXAMPLE3 = dict(envelope=4, single_ess=5, rectangular=5, enumeration=5, two_stage=6, outer=6)


@pytest.mark.parametrize("backend", ["highs", "simplex"])
@pytest.mark.parametrize("make, expected", [(example2, EXAMPLE2), (example3, EXAMPLE3)])
def test_example_chains(make, expected, backend):
    case = make()
    got = {m: aggregate(case, m, backend=backend).objective for m in MODELS}
    assert got == pytest.approx(expected, abs=1e-6)
    assert ordering_violations(got) == []


def test_example1_band_matches_period_interval():
    res = aggregate(example1(), "enumeration")
    assert res.band.lower[0] == pytest.approx(-0.9)
    assert res.band.upper[0] == pytest.approx(19 / 181)


@pytest.mark.parametrize("model", MODELS)
def test_no_storage_gives_generator_range(model):
    case = no_ess_case(2)
    if model == "single_ess":
        with pytest.raises(PreconditionError):
            aggregate(case, model)
        return
    res = aggregate(case, model)
    assert res.objective == pytest.approx(2.0)
    np.testing.assert_allclose(res.band.lower, [-1, -1], atol=1e-9)
    np.testing.assert_allclose(res.band.upper, [0, 0], atol=1e-9)


@pytest.mark.parametrize("make", [example2, example3, lambda: random_case(1), lambda: random_case(4)])
def test_lazy_modes_match_full(make):
    case = make()
    for model in ("rectangular", "two_stage"):
        full = aggregate(case, model, "full")
        lazy = aggregate(case, model, "lazy")
        assert lazy.objective == pytest.approx(full.objective, abs=1e-7)
    with pytest.raises(ValueError):
        aggregate(case, "rectangular", "eager")


def test_unknown_model():
    with pytest.raises(ValueError, match="unknown model"):
        aggregate(example2(), "magic")


@pytest.mark.parametrize("model", ["envelope", "rectangular", "enumeration", "two_stage"])
@pytest.mark.parametrize("make", [example2, example3, lambda: random_case(3, T=4, n_ess=2)])
def test_band_vertices_are_dispatchable(model, make):
    # every model other than the outer relaxation only returns bands whose
    # vertex trajectories admit a full-horizon dispatch
    case = make()
    band = aggregate(case, model).band
    for pattern in itertools.product((0, 1), repeat=case.T):
        assert trajectory_feasible(case, band.vertex(pattern), tol=1e-7)


@pytest.mark.parametrize("make", [example2, example3, toy5, lambda: random_case(0)])
def test_outer_band_extremes_are_dispatchable(make):
    case = make()
    band = aggregate(case, "outer").band
    assert trajectory_feasible(case, band.lower, tol=1e-7)
    assert trajectory_feasible(case, band.upper, tol=1e-7)


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 100_000))
def test_ordering_on_random_cases(seed):
    case = random_case(seed, T=min(4, random_case(seed).T), n_ess=min(2, random_case(seed).n_ess))
    models = [m for m in MODELS if m != "single_ess" or case.n_ess == 1]
    got = {m: aggregate(case, m).objective for m in models}
    assert ordering_violations(got) == []


@pytest.mark.parametrize("make", [example2, example3, toy5, lambda: random_case(1), lambda: random_case(9)])
def test_envelope_box_certifies_its_band(make):
    case = make()
    res = solve_envelope(case)
    env = res.certificate
    assert isinstance(env, Envelopes)
    box = env.soc_box()
    assert box.violations(case) == []
    assert rectangular_violations(case, res.band, box) == []
    assert (env.d_lo <= env.d_hi + 1e-9).all() and (env.c_hi <= env.c_lo + 1e-9).all()


def test_widening_keeps_objective():
    case = toy5()
    assert solve_envelope(case).objective == pytest.approx(solve_envelope(case, widen=False).objective, rel=1e-9)


def test_certificates_and_stats():
    case = example3()
    rect = aggregate(case, "rectangular", "lazy")
    assert isinstance(rect.certificate, SocBox)
    assert rect.stats["added_corners"] == 0
    enum = aggregate(case, "enumeration")
    assert isinstance(enum.certificate, ScenarioSolution)
    assert enum.stats["blocks"] == 14
    for node in enum.certificate.tree.nodes:
        end = enum.band.upper if node.side else enum.band.lower
        assert enum.certificate.pA[node.index] == pytest.approx(end[node.depth - 1], abs=1e-7)
    for res in (rect, enum):
        assert res.stats["lp_vars"] > 0 and res.stats["lp_rows"] > 0


def test_enumeration_size_cap():
    with pytest.raises(ScenarioSizeError):
        aggregate(toy5(T=24), "enumeration")


def test_infeasible_case_is_diagnosed():
    ess = EssParams(node=1, kappa=0.5, p_chg_max=0.1, e_min=0.8, e_max=1.0, e0=0.8)
    case = Case(T=2, tau=1.0, nodes=(1,), esses=(ess,))
    with pytest.raises(InfeasibleCaseError) as err:
        aggregate(case, "envelope")
    assert err.value.period == 1 and err.value.device == "esses[0]"


def test_flexband_basics():
    band = FlexBand([0.0, -1.0], [1.0, 1.0])
    assert band.T == 2
    np.testing.assert_allclose(band.vertex([1, 0]), [1.0, -1.0])
    assert band.contains([0.5, 0.0]) and not band.contains([1.5, 0.0])
    assert flexibility_index(band, [1.0, 2.0]) == pytest.approx(5.0)
    inter = band.intersect(FlexBand([0.5, 0.0], [2.0, 0.5]))
    np.testing.assert_allclose(inter.lower, [0.5, 0.0])
    np.testing.assert_allclose(inter.upper, [1.0, 0.5])
    with pytest.raises(EmptyIntersectionError):
        band.intersect(FlexBand([2.0, 0.0], [3.0, 0.0]))
    with pytest.raises(ValueError):
        FlexBand([1.0], [0.0])
    with pytest.raises(ValueError):
        FlexBand([0.0], [np.inf])
    with pytest.raises(ValueError):
        flexibility_index(band, [1.0])
    assert str(FlexBand([-0.0], [0.0]).lower[0]) == "0.0"


def test_ordering_violations_detects_breaks():
    assert ordering_violations({"envelope": 5.0, "outer": 4.0}) == [("envelope", "outer")]
    assert ordering_violations({"single_ess": 4.0, "rectangular": 5.0, "outer": 6.0}) == [("single_ess", "rectangular")]
