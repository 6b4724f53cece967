"""JSON case/result/log files and CSV band export.

All documents carry ``format_version`` and a ``units`` header.  Unknown keys
are rejected so typos surface instead of being silently ignored.  Floats are
rounded to 12 significant digits on output.
"""

from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from .aggregation import AggregationResult, Envelopes, FlexBand, ScenarioSolution, SocBox, flexibility_index
from .disaggregation import DispatchLog
from .model import Case, CaseValidationError, EssParams, Generator, Line, Load
from .scenario import ScenarioTree

FORMAT_VERSION = 1
UNITS = {"power": "MW", "energy": "MWh", "time": "h", "cost": "$/MWh", "weight": "1"}
SIG_DIGITS = 12


def round_floats(obj):
    """Recursively round floats (and numpy scalars/arrays) to 12 significant digits."""
    if isinstance(obj, dict):
        return {k: round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return round_floats(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(f"{float(obj):.{SIG_DIGITS}g}")
        return 0.0 if v == 0 else v
    return obj


def dumps(doc: dict) -> str:
    return json.dumps(round_floats(doc), indent=1, sort_keys=False) + "\n"


def _write(path, doc: dict) -> None:
    Path(path).write_text(dumps(doc))


def _read(path) -> dict:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise CaseValidationError("path", f"file not found: {path}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseValidationError("path", f"{path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise CaseValidationError("document", "top level must be an object")
    return doc


def _keys(obj, allowed: Iterable[str], where: str, required: Iterable[str] = ()) -> dict:
    if not isinstance(obj, dict):
        raise CaseValidationError(where, "expected an object")
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise CaseValidationError(where, f"unknown key(s) {', '.join(unknown)}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise CaseValidationError(where, f"missing key(s) {', '.join(missing)}")
    return obj


def _header(doc: dict, kind: str) -> None:
    if doc.get("format_version") != FORMAT_VERSION:
        raise CaseValidationError("format_version", f"expected {FORMAT_VERSION}, got {doc.get('format_version')!r}")
    if doc.get("kind") != kind:
        raise CaseValidationError("kind", f"expected {kind!r}, got {doc.get('kind')!r}")
    units = doc.get("units")
    if units != UNITS:
        raise CaseValidationError("units", f"expected {UNITS}")


# --------------------------------------------------------------------------
# cases

_ESS_FIELDS = ("node", "kappa", "eta_d", "eta_c", "p_dis_max", "p_chg_max", "e_min", "e_max", "e0")


def case_to_dict(case: Case) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "case",
        "units": UNITS,
        "meta": {"name": case.name, "T": case.T, "tau": case.tau, "seed": case.seed},
        "network": {
            "nodes": list(case.nodes),
            "lines": [{"from": ln.from_node, "to": ln.to_node, "susceptance": ln.susceptance, "limit": ln.limit}
                      for ln in case.lines],
        },
        "devices": {
            "loads": [{"node": d.node, "p_min": d.p_min, "p_max": d.p_max} for d in case.loads],
            "gens": [{"node": g.node, "p_min": g.p_min, "p_max": g.p_max} for g in case.gens],
            "esses": [{f: getattr(e, f) for f in _ESS_FIELDS} for e in case.esses],
        },
        "costs": {"gens": list(case.gen_costs), "esses": list(case.ess_costs)},
        "weights": list(case.weights),
    }


def _num(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise CaseValidationError(where, f"expected a number, got {v!r}")
    return float(v)


def _nums(v, where):
    if not isinstance(v, list):
        return [_num(v, where)]
    return [_num(x, f"{where}[{k}]") for k, x in enumerate(v)]


def case_from_dict(doc: dict) -> Case:
    _keys(doc, ("format_version", "kind", "units", "meta", "network", "devices", "costs", "weights"), "case",
          ("format_version", "kind", "units", "meta", "network", "devices"))
    _header(doc, "case")
    meta = _keys(doc["meta"], ("name", "T", "tau", "seed"), "meta", ("T", "tau"))
    net = _keys(doc["network"], ("nodes", "lines"), "network", ("nodes",))
    dev = _keys(doc["devices"], ("loads", "gens", "esses"), "devices")
    costs = _keys(doc.get("costs", {}), ("gens", "esses"), "costs")
    T = meta["T"]
    if not isinstance(T, int) or isinstance(T, bool):
        raise CaseValidationError("meta.T", f"expected an integer, got {T!r}")
    lines = []
    for k, ln in enumerate(net.get("lines", [])):
        w = f"network.lines[{k}]"
        _keys(ln, ("from", "to", "susceptance", "limit"), w, ("from", "to", "susceptance", "limit"))
        lines.append(Line(int(ln["from"]), int(ln["to"]), _num(ln["susceptance"], w), _num(ln["limit"], w)))

    def devices(kind, cls):
        out = []
        for k, d in enumerate(dev.get(kind, [])):
            w = f"devices.{kind}[{k}]"
            _keys(d, ("node", "p_min", "p_max"), w, ("node", "p_min", "p_max"))
            out.append(cls(int(d["node"]), _nums(d["p_min"], f"{w}.p_min"), _nums(d["p_max"], f"{w}.p_max")))
        return tuple(out)

    esses = []
    for k, e in enumerate(dev.get("esses", [])):
        w = f"devices.esses[{k}]"
        _keys(e, _ESS_FIELDS, w, ("node",))
        kw = {f: _num(e[f], f"{w}.{f}") for f in _ESS_FIELDS[1:] if f in e}
        esses.append(EssParams(node=int(e["node"]), **kw))
    return Case(
        T=T,
        tau=_num(meta["tau"], "meta.tau"),
        nodes=tuple(int(n) for n in net["nodes"]),
        lines=tuple(lines),
        loads=devices("loads", Load),
        gens=devices("gens", Generator),
        esses=tuple(esses),
        gen_costs=tuple(_nums(costs.get("gens", []), "costs.gens")),
        ess_costs=tuple(_nums(costs.get("esses", []), "costs.esses")),
        weights=tuple(_nums(doc.get("weights", []), "weights")),
        name=str(meta.get("name", "case")),
        seed=meta.get("seed"),
    )


def save_case(case: Case, path) -> None:
    _write(path, case_to_dict(case))


def load_case(path) -> Case:
    """Read a case file; ``builtin:NAME`` loads one of the shipped cases."""
    p = str(path)
    if p.startswith("builtin:"):
        name = p.split(":", 1)[1]
        ref = resources.files("flexagg") / "data" / "cases" / f"{name}.json"
        if not ref.is_file():
            raise CaseValidationError("case", f"no built-in case {name!r}; see {', '.join(builtin_names())}")
        return case_from_dict(json.loads(ref.read_text()))
    return case_from_dict(_read(path))


def builtin_names() -> list:
    folder = resources.files("flexagg") / "data" / "cases"
    return sorted(f.name[:-5] for f in folder.iterdir() if f.name.endswith(".json"))


# --------------------------------------------------------------------------
# aggregation results


def result_to_dict(result: AggregationResult) -> dict:
    cert = result.certificate
    if isinstance(cert, SocBox):
        c = {"kind": "soc_box", "lo": cert.lo, "hi": cert.hi}
    elif isinstance(cert, Envelopes):
        c = {"kind": "envelopes", "d_lo": cert.d_lo, "c_lo": cert.c_lo, "d_hi": cert.d_hi, "c_hi": cert.c_hi,
             "e_lo": cert.e_lo, "e_hi": cert.e_hi}
    elif isinstance(cert, ScenarioSolution):
        c = {"kind": "scenario_tree", "pA": cert.pA, "soc": cert.soc}
    else:
        c = {"kind": "none"}
    stats = {k: v for k, v in result.stats.items() if k != "wall_time"}
    return {
        "format_version": FORMAT_VERSION,
        "kind": "aggregation_result",
        "units": UNITS,
        "case": result.case_name,
        "model": result.model,
        "objective": result.objective,
        "weights": list(result.weights),
        "band": {"lower": result.band.lower, "upper": result.band.upper},
        "certificate": c,
        "stats": stats,
    }


def result_from_dict(doc: dict) -> AggregationResult:
    _keys(doc, ("format_version", "kind", "units", "case", "model", "objective", "weights", "band",
                "certificate", "stats"), "result", ("format_version", "kind", "units", "model", "band"))
    _header(doc, "aggregation_result")
    band_doc = _keys(doc["band"], ("lower", "upper"), "band", ("lower", "upper"))
    band = FlexBand(band_doc["lower"], band_doc["upper"])
    c = doc.get("certificate") or {"kind": "none"}
    kind = c.get("kind")
    if kind == "soc_box":
        _keys(c, ("kind", "lo", "hi"), "certificate", ("lo", "hi"))
        cert = SocBox(np.array(c["lo"], dtype=float).reshape(-1, band.T + 1),
                      np.array(c["hi"], dtype=float).reshape(-1, band.T + 1))
    elif kind == "envelopes":
        names = ("d_lo", "c_lo", "d_hi", "c_hi", "e_lo", "e_hi")
        _keys(c, ("kind",) + names, "certificate", names)
        cert = Envelopes(*(np.array(c[n], dtype=float).reshape(-1, band.T + (n.startswith("e_"))) for n in names))
    elif kind == "scenario_tree":
        _keys(c, ("kind", "pA", "soc"), "certificate", ("pA", "soc"))
        tree = ScenarioTree(band.T)
        pA = np.array(c["pA"], dtype=float)
        cert = ScenarioSolution(tree, pA, np.array(c["soc"], dtype=float).reshape(len(tree), -1))
    elif kind == "none":
        cert = None
    else:
        raise CaseValidationError("certificate.kind", f"unknown certificate kind {kind!r}")
    weights = tuple(float(w) for w in doc.get("weights", [1.0] * band.T))
    return AggregationResult(doc["model"], band, flexibility_index(band, weights), weights, cert,
                             dict(doc.get("stats", {})), doc.get("case", ""))


def save_result(result: AggregationResult, path) -> None:
    _write(path, result_to_dict(result))


def load_result(path) -> AggregationResult:
    return result_from_dict(_read(path))


def load_band(path) -> FlexBand:
    """Band from a result file or from a bare ``{"lower": [...], "upper": [...]}`` document."""
    doc = _read(path)
    if doc.get("kind") == "aggregation_result":
        return result_from_dict(doc).band
    _keys(doc, ("lower", "upper"), "band", ("lower", "upper"))
    return FlexBand(doc["lower"], doc["upper"])


# --------------------------------------------------------------------------
# dispatch logs, trajectories, plots


def log_to_dict(log: DispatchLog) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "dispatch_log",
        "units": UNITS,
        "case": log.case_name,
        "strategy": log.strategy,
        "total_cost": log.total_cost,
        "initial_soc": log.e0,
        "periods": [
            {"period": p.period, "setpoint": p.setpoint, "served": p.served, "pG": p.pG, "pD": p.pD,
             "p_dis": p.sD, "p_chg": p.sC, "flow": p.flow, "soc": p.soc, "cost": p.cost, "residual": p.residual}
            for p in log.periods
        ],
    }


def save_log(log: DispatchLog, path) -> None:
    _write(path, log_to_dict(log))


def load_trajectory(source: str, T: int | None = None) -> np.ndarray:
    """Setpoints from a JSON file (list or ``{"trajectory": [...]}``), a one-column
    CSV file, or an inline comma-separated list."""
    p = Path(source)
    if p.suffix == ".json" or (p.exists() and p.read_text().lstrip().startswith(("[", "{"))):
        doc = json.loads(p.read_text()) if p.exists() else None
        if doc is None:
            raise CaseValidationError("trajectory", f"file not found: {source}")
        if isinstance(doc, dict):
            _keys(doc, ("trajectory",), "trajectory", ("trajectory",))
            doc = doc["trajectory"]
        vals = _nums(doc, "trajectory")
    elif p.exists():
        with p.open() as fh:
            rows = [r for r in csv.reader(fh) if r]
        if rows and not _is_number(rows[0][-1]):
            rows = rows[1:]
        vals = [_num(float(r[-1]), "trajectory") for r in rows]
    else:
        parts = [s for s in source.split(",") if s.strip()]
        if not parts or not all(_is_number(s) for s in parts):
            raise CaseValidationError("trajectory", f"not a file or comma-separated numbers: {source}")
        vals = [float(s) for s in parts]
    arr = np.array(vals, dtype=float)
    if T is not None and arr.size != T:
        raise CaseValidationError("trajectory", f"expected {T} setpoints, got {arr.size}")
    return arr


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def write_band_csv(results: Iterable[AggregationResult], path) -> None:
    """Long-format CSV with columns period, lower, upper, model."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["period", "lower", "upper", "model"])
        for r in results:
            for t in range(r.band.T):
                w.writerow([t + 1, f"{r.band.lower[t]:.12g}", f"{r.band.upper[t]:.12g}", r.model])
