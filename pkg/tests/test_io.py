import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flexagg import io
from flexagg.aggregation import MODELS, aggregate
from flexagg.cases import BUILTIN, example2, example3, random_case, toy5
from flexagg.disaggregation import run_rolling
from flexagg.model import CaseValidationError


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_case_round_trip(seed):
    case = random_case(seed)
    doc = io.case_to_dict(case)
    back = io.case_from_dict(json.loads(io.dumps(doc)))
    # serialization keeps 12 significant digits, so a second pass is byte-identical
    assert io.dumps(io.case_to_dict(back)) == io.dumps(doc)
    assert back.esses == case.esses and back.lines == case.lines and back.weights == case.weights
    for a, b in zip(back.loads + back.gens, case.loads + case.gens):
        assert a.node == b.node
        np.testing.assert_allclose(a.p_min, b.p_min, rtol=1e-11, atol=1e-12)
        np.testing.assert_allclose(a.p_max, b.p_max, rtol=1e-11, atol=1e-12)


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_builtin_files_match_builders(name):
    shipped = io.load_case(f"builtin:{name}")
    assert io.dumps(io.case_to_dict(shipped)) == io.dumps(io.case_to_dict(BUILTIN[name]()))
    assert name in io.builtin_names()


def test_round_floats():
    assert io.round_floats(1 / 3) == 0.333333333333
    assert io.round_floats(np.float64(-0.0)) == 0.0
    assert io.round_floats({"a": np.array([1.0, 2.5]), "b": (np.int64(3), True)}) == {"a": [1.0, 2.5], "b": [3, True]}


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d.update(extra=1), "case"),
    (lambda d: d["meta"].update(colour="red"), "meta"),
    (lambda d: d["devices"]["esses"][0].update(soh=0.9), "esses[0]"),
    (lambda d: d.update(format_version=2), "format_version"),
    (lambda d: d.update(kind="result"), "kind"),
    (lambda d: d["units"].update(power="kW"), "units"),
    (lambda d: d["meta"].pop("T"), "meta"),
    (lambda d: d["meta"].update(T="two"), "meta.T"),
    (lambda d: d["devices"]["esses"][0].update(e0=5.0), "esses[0].e0"),
])
def test_case_validation(mutate, field):
    doc = json.loads(io.dumps(io.case_to_dict(example2())))
    mutate(doc)
    with pytest.raises(CaseValidationError) as err:
        io.case_from_dict(doc)
    assert field in err.value.field


def test_missing_and_broken_files(tmp_path):
    with pytest.raises(CaseValidationError, match="not found"):
        io.load_case(tmp_path / "none.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    with pytest.raises(CaseValidationError, match="not valid JSON"):
        io.load_case(bad)
    with pytest.raises(CaseValidationError, match="no built-in case"):
        io.load_case("builtin:nosuch")


@pytest.mark.parametrize("model", MODELS)
def test_result_round_trip(model, tmp_path):
    case = example3()
    res = aggregate(case, model)
    path = tmp_path / "r.json"
    io.save_result(res, path)
    back = io.load_result(path)
    assert back.model == model and back.case_name == "example3"
    assert back.objective == pytest.approx(res.objective, abs=1e-10)
    np.testing.assert_allclose(back.band.lower, res.band.lower, atol=1e-10)
    assert type(back.certificate) is type(res.certificate)
    assert "wall_time" not in json.loads(path.read_text())["stats"]
    # a reloaded certificate still drives the dispatch
    if model in ("envelope", "rectangular", "enumeration", "single_ess"):
        traj = back.band.vertex([1, 0, 1])
        assert run_rolling(case, back, traj).max_residual <= 1e-7
    assert io.load_band(path).T == 3


def test_bare_band_and_trajectories(tmp_path):
    p = tmp_path / "band.json"
    p.write_text(json.dumps({"lower": [0, 0], "upper": [1, 2]}))
    assert io.load_band(p).upper[1] == 2.0
    np.testing.assert_allclose(io.load_trajectory("0.5, -1", 2), [0.5, -1.0])
    j = tmp_path / "t.json"
    j.write_text(json.dumps({"trajectory": [1, 2]}))
    np.testing.assert_allclose(io.load_trajectory(str(j)), [1.0, 2.0])
    c = tmp_path / "t.csv"
    c.write_text("period,setpoint\n1,0.25\n2,0.75\n")
    np.testing.assert_allclose(io.load_trajectory(str(c), 2), [0.25, 0.75])
    with pytest.raises(CaseValidationError):
        io.load_trajectory("0.5", 2)
    with pytest.raises(CaseValidationError):
        io.load_trajectory("abc")


def test_log_and_band_csv(tmp_path):
    case = toy5(T=3)
    res = aggregate(case, "rectangular")
    log = run_rolling(case, res, res.band.lower)
    io.save_log(log, tmp_path / "log.json")
    doc = json.loads((tmp_path / "log.json").read_text())
    assert doc["kind"] == "dispatch_log" and len(doc["periods"]) == 3
    io.write_band_csv([res], tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "period,lower,upper,model" and len(lines) == 4
