import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexagg.aggregation import aggregate
from flexagg.cases import example2, example3, random_case, toy5
from flexagg.disaggregation import (DispatchInfeasibleError, SetpointOutOfBandError, parse_strategy,
                                    run_rolling)
from flexagg.harness import sample_trajectory
from flexagg.model import check_split_ess_step

INNER = ("envelope", "rectangular", "enumeration")


def _check_log(case, log, traj):
    assert len(log.periods) == case.T
    assert log.max_residual <= 1e-7
    soc = log.soc_trajectory
    for k, d in enumerate(log.periods):
        assert d.period == k + 1
        assert d.served == pytest.approx(traj[k], abs=1e-6)
        for i, e in enumerate(case.esses):
            assert e.e_min - 1e-7 <= d.soc[i] <= e.e_max + 1e-7
            assert check_split_ess_step(soc[i, k], soc[i, k + 1], d.sD[i], d.sC[i], e, case.tau, mixing=True,
                                        tol=1e-6)


@pytest.mark.parametrize("model", INNER)
@pytest.mark.parametrize("make", [example2, example3])
def test_every_vertex_is_served(make, model):
    case = make()
    res = aggregate(case, model)
    for pattern in itertools.product((0, 1), repeat=case.T):
        traj = res.band.vertex(pattern)
        _check_log(case, run_rolling(case, res, traj), traj)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(INNER), st.sampled_from(["uniform", "vertex", "adversarial"]))
def test_random_trajectories_are_served(seed, model, mode):
    case = random_case(seed, T=3, n_ess=min(2, random_case(seed).n_ess))
    res = aggregate(case, model)
    traj = sample_trajectory(res.band, seed, mode)
    _check_log(case, run_rolling(case, res, traj), traj)


def test_two_stage_band_fails_without_lookahead():
    case = example2()
    res = aggregate(case, "two_stage")
    failed = []
    for pattern in itertools.product((0, 1), repeat=2):
        try:
            run_rolling(case, res, res.band.vertex(pattern), "myopic")
        except DispatchInfeasibleError as exc:
            failed.append((pattern, exc.period))
    assert failed and all(period == 2 for _, period in failed)


def test_greedy_not_costlier_than_baseline():
    case = toy5(T=4)
    for model in INNER:
        res = aggregate(case, model)
        for k in range(4):
            traj = sample_trajectory(res.band, k, "uniform")
            greedy = run_rolling(case, res, traj, model).total_cost
            base = run_rolling(case, res, traj, f"{model}-baseline").total_cost
            assert greedy <= base + 1e-6


def test_setpoint_outside_band():
    case = example2()
    res = aggregate(case, "enumeration")
    with pytest.raises(SetpointOutOfBandError) as err:
        run_rolling(case, res, [0.0, -0.5])
    assert err.value.period == 2 and err.value.side == "lower"
    # tiny overshoot is clamped rather than rejected
    log = run_rolling(case, res, [1.0 + 1e-9, 1.0])
    assert log.periods[0].served == pytest.approx(1.0)


def test_bad_inputs():
    case = example2()
    res = aggregate(case, "enumeration")
    with pytest.raises(ValueError):
        run_rolling(case, res, [0.0])
    with pytest.raises(ValueError):
        parse_strategy("greedy")
    with pytest.raises(ValueError):
        parse_strategy("envelope-cheap")
    assert parse_strategy("envelope-baseline") == ("envelope", False)
    assert parse_strategy("myopic") == ("myopic", True)


def test_rolling_is_deterministic():
    case = toy5(T=4)
    res = aggregate(case, "rectangular")
    traj = sample_trajectory(res.band, 3, "vertex")
    a = run_rolling(case, res, traj)
    b = run_rolling(case, res, traj)
    np.testing.assert_array_equal(a.soc_trajectory, b.soc_trajectory)
    assert a.total_cost == b.total_cost
