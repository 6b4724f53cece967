import numpy as np
import pytest

from flexagg.aggregation import FlexBand, aggregate
from flexagg.cases import example1, example2, example3, random_case, toy5
from flexagg.oracle import (GridError, GridSpec, backward_soc_sets, grid_band_search, setpoint_lattice, soc_axes,
                            verify_band)

GRID = GridSpec(0.05, 0.05)


def test_lattice_and_axes():
    np.testing.assert_allclose(setpoint_lattice(-0.12, 0.1, 0.05), [-0.12, -0.1, -0.05, 0.0, 0.05, 0.1])
    np.testing.assert_allclose(setpoint_lattice(0.3, 0.3, 0.05), [0.3])
    (ax,) = soc_axes(example1(), 0.3)
    assert ax[0] == 0.0 and ax[-1] == 1.0 and 1.0 in ax and np.isclose(ax, 0.4).any()


def test_grid_errors():
    with pytest.raises(GridError):
        GridSpec(0.0, 0.05)
    with pytest.raises(GridError):
        verify_band(toy5(T=2, n_ess=3), aggregate(toy5(T=2, n_ess=3), "envelope").band, GRID)
    with pytest.raises(GridError):
        verify_band(example2(), FlexBand([0.0], [0.0]), GRID)
    with pytest.raises(GridError):
        verify_band(example2(), FlexBand([0.0, 0.0], [0.0, 0.0]), GRID, variant="median")
    with pytest.raises(GridError):
        backward_soc_sets(example2(), FlexBand([0.0, 0.0], [0.0, 0.0]), GridSpec(0.05, 1e-7, max_points=1000))
    with pytest.raises(GridError):
        grid_band_search(random_case(0, T=4, n_ess=1), GRID)


def test_example2_bands():
    case = example2()
    assert verify_band(case, aggregate(case, "enumeration").band, GRID)
    # the two-stage band holds vertex trajectories no causal dispatch can follow
    assert not verify_band(case, aggregate(case, "two_stage").band, GRID)
    assert not verify_band(case, aggregate(case, "two_stage").band, GRID, "optimistic")


def test_surviving_sets_shrink_with_wider_bands():
    case = example3()
    band = aggregate(case, "enumeration").band
    narrow = FlexBand(band.lower + 0.1 * band.width, band.upper - 0.1 * band.width)
    wide_sets = backward_soc_sets(case, FlexBand(np.round(band.lower / 0.05) * 0.05,
                                                 np.round(band.upper / 0.05) * 0.05), GRID)
    narrow_sets = backward_soc_sets(case, FlexBand(np.ceil(narrow.lower / 0.05) * 0.05,
                                                   np.floor(narrow.upper / 0.05) * 0.05), GRID)
    for t in range(case.T + 1):
        assert not (wide_sets.sets[t] & ~narrow_sets.sets[t]).any()
    assert wide_sets.contains(0, case.e0)


@pytest.mark.parametrize("make", [example1, example2, example3])
def test_search_matches_enumeration(make):
    case = make()
    found = grid_band_search(case, GRID)
    best = aggregate(case, "enumeration").objective
    assert found.value <= found.value_optimistic + 1e-9
    assert abs(best - found.value) <= found.error_bound
    assert found.value <= best + 1e-7
    assert verify_band(case, found.band, GRID)


def test_two_ess_verification():
    case = random_case(2, T=2, n_ess=2, n_nodes=2)
    band = aggregate(case, "enumeration").band
    assert verify_band(case, band, GRID, "optimistic")
    outer = aggregate(case, "outer").band
    wide = FlexBand(outer.lower - 0.1 * np.abs(outer.lower) - 0.1, outer.upper + 0.1 * np.abs(outer.upper) + 0.1)
    assert not verify_band(case, wide, GRID, "optimistic")
