import json

import pytest

from flexagg.cli import cli_main
from flexagg.io import case_to_dict, dumps
from flexagg.cases import toy5


def _run(*argv):
    return cli_main([str(a) for a in argv])


def test_aggregate_example3(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert _run("aggregate", "--case", "builtin:example3", "--model", "enumeration", "--out", out) == 0
    assert json.loads(out.read_text())["objective"] == pytest.approx(5.0)
    assert "objective 5" in capsys.readouterr().out


def test_case_file_path(tmp_path):
    case = tmp_path / "c.json"
    case.write_text(dumps(case_to_dict(toy5(T=2))))
    assert _run("aggregate", "--case", case, "--model", "rectangular", "--mode", "lazy",
                "--out", tmp_path / "r.json") == 0


def test_validation_exit_codes(tmp_path, capsys):
    assert _run("aggregate", "--case", tmp_path / "none.json", "--model", "outer", "--out", tmp_path / "r") == 2
    assert "not found" in capsys.readouterr().err
    assert _run("aggregate", "--case", "builtin:example3", "--model", "nope", "--out", tmp_path / "r") == 2
    assert _run("aggregate", "--case", "builtin:example2") == 2
    assert _run("frobnicate") == 2
    assert _run("simulate", "--case", "builtin:example2", "--strategies", "greedy", "--out", tmp_path / "s") == 2
    assert _run("simulate", "--case", "builtin:example2", "--n", "-1", "--out", tmp_path / "s") == 2
    assert _run("aggregate", "--case", "builtin:toy5", "--model", "single_ess", "--out", tmp_path / "r") == 2


def test_size_cap_exit_code(tmp_path):
    case = tmp_path / "c.json"
    case.write_text(dumps(case_to_dict(toy5(T=24))))
    assert _run("aggregate", "--case", case, "--model", "enumeration", "--out", tmp_path / "r.json") == 3
    assert _run("oracle-check", "--case", "builtin:toy5", "--band", tmp_path / "none.json") == 2


def test_disaggregate_and_failures(tmp_path):
    enum, ts = tmp_path / "e.json", tmp_path / "t.json"
    assert _run("aggregate", "--case", "builtin:example2", "--model", "enumeration", "--out", enum) == 0
    assert _run("aggregate", "--case", "builtin:example2", "--model", "two_stage", "--out", ts) == 0
    log = tmp_path / "l.json"
    assert _run("disaggregate", "--case", "builtin:example2", "--result", enum, "--trajectory", "1,0",
                "--out", log) == 0
    assert len(json.loads(log.read_text())["periods"]) == 2
    # out-of-band setpoint is a validation error, an unservable one is infeasible
    assert _run("disaggregate", "--case", "builtin:example2", "--result", enum, "--trajectory", "1,-1",
                "--out", log) == 2
    assert _run("disaggregate", "--case", "builtin:example2", "--result", ts, "--trajectory", "1,1",
                "--strategy", "myopic", "--out", log) == 4
    assert _run("disaggregate", "--case", "builtin:example2", "--result", enum, "--trajectory", "1,0,1",
                "--out", log) == 2


def test_oracle_check(tmp_path):
    enum, ts = tmp_path / "e.json", tmp_path / "t.json"
    _run("aggregate", "--case", "builtin:example2", "--model", "enumeration", "--out", enum)
    _run("aggregate", "--case", "builtin:example2", "--model", "two_stage", "--out", ts)
    assert _run("oracle-check", "--case", "builtin:example2", "--band", enum, "--grid-step", "0.05") == 0
    assert _run("oracle-check", "--case", "builtin:example2", "--band", ts) == 4
    assert _run("oracle-check", "--case", "builtin:example2", "--band", enum, "--grid-step", "0") == 2


def test_emit_plot(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    _run("aggregate", "--case", "builtin:example3", "--model", "envelope", "--out", a)
    _run("aggregate", "--case", "builtin:example3", "--model", "outer", "--out", b)
    csv = tmp_path / "p.csv"
    assert _run("emit-plot", "--result", a, "--result", b, "--out", csv) == 0
    rows = csv.read_text().splitlines()
    assert rows[0] == "period,lower,upper,model" and len(rows) == 7


def test_simulate_is_byte_identical(tmp_path):
    args = ["simulate", "--case", "builtin:example3", "--strategies", "enumeration,rectangular,envelope",
            "--n", "5", "--seed", "4"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert _run(*args, "--out", a) == 0
    assert _run(*args, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.json.timing.json").exists()
    doc = json.loads(a.read_text())
    assert doc["strategies"]["enumeration"]["feasibility_rate"] == 1.0
