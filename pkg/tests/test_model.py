import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexagg.cases import example1, example2, no_ess_case, random_case
from flexagg.model import (Case, CaseValidationError, EssParams, Generator, Line, Load, aggregate_interval,
                           build_period_polyhedron, check_general_ess_step, check_split_ess_step,
                           ess_energy_delta, ess_energy_delta_inv, exact_aggregate_interval)

effs = st.floats(0.5, 1.0)
powers = st.floats(-2.0, 2.0, allow_nan=False)


@settings(max_examples=200)
@given(effs, effs, powers, powers)
def test_energy_delta_monotone(eta_d, eta_c, p, q):
    ess = EssParams(node=1, eta_d=eta_d, eta_c=eta_c)
    lo, hi = sorted((p, q))
    assert ess_energy_delta(lo, ess, 1.0) <= ess_energy_delta(hi, ess, 1.0) + 1e-15


@settings(max_examples=200)
@given(effs, effs, powers, st.floats(0.25, 2.0))
def test_energy_delta_inverse(eta_d, eta_c, p, tau):
    ess = EssParams(node=1, eta_d=eta_d, eta_c=eta_c)
    assert ess_energy_delta_inv(ess_energy_delta(p, ess, tau), ess, tau) == pytest.approx(p, abs=1e-12)


def test_energy_delta_is_elementwise():
    ess = EssParams(node=1, eta_d=0.8, eta_c=0.5)
    np.testing.assert_allclose(ess_energy_delta(np.array([1.0, -1.0, 0.0]), ess, 2.0), [2.5, -1.0, 0.0])


def test_step_checks():
    ess = EssParams(node=1, eta_d=0.9, eta_c=0.9, e0=1.0)
    assert check_general_ess_step(1.0, 0.0, 0.9, ess, 1.0)
    assert not check_general_ess_step(1.0, 0.0, 1.0, ess, 1.0)
    assert not check_general_ess_step(1.0, 1.0, 1.5, ess, 1.0)
    # simultaneous charge and discharge is allowed only without complementarity
    e_next = 1.0 - 0.5 / 0.9 + 0.5 * 0.9
    assert check_split_ess_step(1.0, e_next, 0.5, 0.5, ess, 1.0)
    assert check_split_ess_step(1.0, e_next, 0.5, 0.5, ess, 1.0, mixing=True)
    assert not check_split_ess_step(1.0, e_next, 0.5, 0.5, ess, 1.0, complementarity=True)
    e_next = 1.0 - 0.6 / 0.9 + 0.6 * 0.9
    assert not check_split_ess_step(1.0, e_next, 0.6, 0.6, ess, 1.0, mixing=True)


def test_example1_intervals():
    c = example1()
    lo, hi = aggregate_interval(c, 1)
    assert lo == pytest.approx(-0.9, abs=1e-9)
    assert hi == pytest.approx(19 / 181, abs=1e-9)
    assert aggregate_interval(c, 1, mixing=False)[1] == pytest.approx(0.19, abs=1e-9)
    assert exact_aggregate_interval(c, 1) == pytest.approx((-0.9, 0.0), abs=1e-9)


def test_example2_period_intervals():
    c = example2()
    # full ESS: the line caps import at 1, export combines ESS, DG and the line
    assert aggregate_interval(c, 1) == pytest.approx((-1.0, 1.0))
    assert aggregate_interval(c, 2, soc_prev=[0.0]) == pytest.approx((0.0, 1.0))
    assert aggregate_interval(c, 2, soc_prev=[1.0]) == pytest.approx((-1.0, 0.0))


def test_interval_is_nan_when_infeasible():
    c = no_ess_case(1).replace(loads=(Load(1, [2.0], [3.0]),), gens=(Generator(1, [0.0], [1.0]),))
    c2 = Case(T=1, tau=1.0, nodes=(1, 2), lines=(Line(1, 2, 10.0, 0.5),), loads=(Load(2, [2.0], [3.0]),))
    assert np.isfinite(aggregate_interval(c, 1)).all()
    assert np.isnan(aggregate_interval(c2, 1)).all()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_mixing_row_redundant_for_ideal_ess(seed):
    c = random_case(seed, T=1, ideal=True)
    a = aggregate_interval(c, 1, mixing=True)
    b = aggregate_interval(c, 1, mixing=False)
    assert a == pytest.approx(b, abs=1e-7)
    if c.n_ess <= 2 and np.isfinite(a).all():
        assert exact_aggregate_interval(c, 1) == pytest.approx(a, abs=1e-7)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_convex_model_contains_exact_model(seed):
    c = random_case(seed, T=1, n_ess=2)
    lo, hi = aggregate_interval(c, 1)
    elo, ehi = exact_aggregate_interval(c, 1)
    assert lo <= elo + 1e-7 and ehi <= hi + 1e-7


def test_polyhedron_balance_and_flows():
    c = example2()
    poly = build_period_polyhedron(c, 1)
    assert poly.n_vars > 0
    assert poly.delta_dis[0] == pytest.approx(1.0) and poly.delta_chg[0] == pytest.approx(1.0)


@pytest.mark.parametrize("bad, field", [
    (dict(T=0), "T"),
    (dict(tau=0.0), "tau"),
    (dict(nodes=(2,)), "nodes"),
    (dict(nodes=(1, 1)), "nodes"),
    (dict(weights=(1.0, 1.0)), "weights"),
    (dict(weights=(-1.0,)), "weights"),
    (dict(esses=(EssParams(node=1, e0=2.0),)), "esses[0].e0"),
    (dict(esses=(EssParams(node=1, kappa=1.5),)), "esses[0].kappa"),
    (dict(esses=(EssParams(node=9),)), "esses[0].node"),
    (dict(loads=(Load(1, [2.0], [1.0]),)), "loads[0]"),
    (dict(lines=(Line(1, 1, 1.0, 1.0),)), "lines[0]"),
])
def test_case_validation(bad, field):
    base = dict(T=1, tau=1.0, nodes=(1,))
    base.update(bad)
    with pytest.raises(CaseValidationError) as err:
        Case(**base)
    assert err.value.field.startswith(field)
