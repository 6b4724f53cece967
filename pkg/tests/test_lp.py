import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from flexagg.lp import (EQ, GE, LE, LinearProgram, LPBuilder, LPDimensionError, Status, check_feasible, solve,
                        write_lp)

BACKENDS = ("highs", "simplex")


def _lp(c, A, sense, rhs, lb, ub, maximize=False):
    return LinearProgram(np.asarray(c, float), sp.csr_matrix(np.asarray(A, float)), np.asarray(sense),
                         np.asarray(rhs, float), np.asarray(lb, float), np.asarray(ub, float), maximize)


@pytest.mark.parametrize("backend", BACKENDS)
def test_small_maximization(backend):
    # max x + y  s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0  ->  (1.6, 1.2)
    lp = _lp([1, 1], [[1, 2], [3, 1]], [LE, LE], [4, 6], [0, 0], [np.inf, np.inf], maximize=True)
    out = solve(lp, backend)
    assert out.optimal
    np.testing.assert_allclose(out.x, [1.6, 1.2], atol=1e-9)
    assert out.objective == pytest.approx(2.8)
    assert out.dual_objective == pytest.approx(2.8)


@pytest.mark.parametrize("backend", BACKENDS)
def test_equality_and_free_variables(backend):
    # min x - y  s.t. x + y = 1, x - y >= -3, x free, -5 <= y <= 5
    lp = _lp([1, -1], [[1, 1], [1, -1]], [EQ, GE], [1, -3], [-np.inf, -5], [np.inf, 5])
    out = solve(lp, backend)
    assert out.objective == pytest.approx(-3.0)
    assert out.dual_objective == pytest.approx(-3.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible_and_unbounded(backend):
    infeasible = _lp([1], [[1], [1]], [LE, GE], [0, 1], [-np.inf], [np.inf])
    assert solve(infeasible, backend).status is Status.INFEASIBLE
    assert not check_feasible(infeasible, backend)
    unbounded = _lp([1], [[1]], [LE], [0], [-np.inf], [np.inf])
    assert solve(unbounded, backend).status is Status.UNBOUNDED


def test_dimension_checks():
    with pytest.raises(LPDimensionError):
        _lp([1, 1], [[1]], [LE], [0], [0, 0], [1, 1])
    with pytest.raises(LPDimensionError):
        _lp([np.nan], [[1]], [LE], [0], [0], [1])
    with pytest.raises(LPDimensionError):
        _lp([1], [[1]], ["X"], [0], [0], [1])
    with pytest.raises(LPDimensionError):
        _lp([1], [[1]], [LE], [0], [1], [0])
    with pytest.raises(ValueError):
        solve(_lp([1], [[1]], [LE], [1], [0], [1]), "nosuch")


def test_builder_rows_and_rhs_update():
    b = LPBuilder()
    x = b.add_vars(2, 0.0, 10.0)
    row = b.add_row(x, [1.0, 1.0], LE, 3.0)
    b.add_range([int(x[0])], [1.0], 0.5, 2.0)
    b.add_objective(x, [1.0, 2.0])
    assert solve(b.build(maximize=True)).objective == pytest.approx(5.5)
    b.set_rhs(row, 4.0)
    assert solve(b.build(maximize=True)).objective == pytest.approx(7.5)
    b.clear_objective()
    b.add_objective([int(x[0])], [1.0])
    assert solve(b.build(maximize=True)).objective == pytest.approx(2.0)


def test_write_lp(tmp_path):
    lp = _lp([1, -1], [[1, 1], [1, -1]], [EQ, GE], [1, -3], [-np.inf, -5], [np.inf, 5])
    path = tmp_path / "m.lp"
    write_lp(lp, path, names=["x", "y"])
    text = path.read_text()
    assert "Minimize" in text and "Subject To" in text and "End" in text
    assert "x free" in text or "-inf <= x" in text


@st.composite
def random_lps(draw):
    m = draw(st.integers(1, 6))
    n = draw(st.integers(1, 6))
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    A = np.round(rng.uniform(-3, 3, (m, n)), 2)
    A[rng.random((m, n)) < 0.3] = 0.0
    # rows built around a known point so most instances are feasible
    x0 = rng.uniform(-1, 1, n)
    sense = rng.choice([LE, GE, EQ], m, p=[0.45, 0.45, 0.1])
    ax = A @ x0
    rhs = np.round(np.where(sense == LE, ax + rng.uniform(0, 1, m), np.where(sense == GE, ax - rng.uniform(0, 1, m), ax)), 6)
    lb = np.where(rng.random(n) < 0.8, -2.0, -np.inf)
    ub = np.where(rng.random(n) < 0.8, 2.0, np.inf)
    c = np.round(rng.uniform(-1, 1, n), 2)
    return _lp(c, A, sense, rhs, lb, ub, bool(rng.random() < 0.5))


@settings(max_examples=150, deadline=None)
@given(random_lps())
def test_simplex_agrees_with_highs(lp):
    a = solve(lp, "highs")
    b = solve(lp, "simplex")
    assert a.status == b.status
    if a.optimal:
        assert b.objective == pytest.approx(a.objective, abs=1e-6)
        # strong duality on both backends
        assert a.dual_objective == pytest.approx(a.objective, abs=1e-6)
        assert b.dual_objective == pytest.approx(b.objective, abs=1e-6)
        assert lp.max_violation(b.x) <= 1e-7
