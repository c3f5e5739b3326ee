"""Network files, the embedded datasets and result serialization."""
from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path

import jsonschema

from ..network import (Battery, Bus, GenerationUnit, Line, Load, RadialNetwork, Switchgear,
                       validate)
from ..stochastic import BatterySpec, repair_dist_from_dict

EMBEDDED = ("ieee33", "ieee33_mg")
RESULT_COLUMNS = ("iteration", "network", "ENS_MWh", "CENS", "SAIFI", "SAIDI_h", "CAIDI_h")


class DatasetError(ValueError):
    pass


_num = {"type": "number"}
_str = {"type": "string"}
NETWORK_SCHEMA = {
    "type": "object",
    "required": ["buses", "lines", "switchgear", "networks", "slack_bus"],
    "properties": {
        "buses": {"type": "array", "items": {
            "type": "object", "required": ["id"],
            "properties": {
                "id": _str,
                "coordinates": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "load_ref": {"type": ["string", "null"]},
                "generation_ref": {"type": ["string", "null"]},
                "customer_count": {"type": "integer"},
                "customer_category": _str,
            }}},
        "lines": {"type": "array", "items": {
            "type": "object",
            "required": ["id", "from_bus", "to_bus", "resistance", "reactance", "length", "capacity",
                         "failure_rate_per_km", "repair_time_dist"],
            "properties": {
                "id": _str, "from_bus": _str, "to_bus": _str, "resistance": _num, "reactance": _num,
                "length": _num, "capacity": _num, "failure_rate_per_km": _num,
                "repair_time_dist": {"oneOf": [
                    {"type": "object", "required": ["shape", "scale"],
                     "properties": {"shape": _num, "scale": _num}},
                    {"type": "object", "required": ["fixed_hours"], "properties": {"fixed_hours": _num}},
                ]},
            }}},
        "switchgear": {"type": "array", "items": {
            "type": "object", "required": ["id", "kind", "host_line"],
            "properties": {"id": _str, "kind": {"enum": ["disconnector", "circuit_breaker"]},
                           "host_line": _str, "end": {"enum": ["from", "to"]},
                           "state": {"enum": ["open", "closed"]},
                           "sectioning_time": {"type": ["number", "null"]}}}},
        "networks": {"type": "object", "additionalProperties": {"type": "array", "items": _str}},
        "slack_bus": _str,
        "loads": {"type": "array", "items": {
            "type": "object", "required": ["id", "bus", "p_mw", "q_mvar", "peak_mw"],
            "properties": {"id": _str, "bus": _str, "p_mw": _num, "q_mvar": _num, "peak_mw": _num,
                           "power_factor": _num}}},
        "generators": {"type": "array", "items": {
            "type": "object", "required": ["id", "bus", "kind", "rated_mw"],
            "properties": {"id": _str, "bus": _str, "kind": {"enum": ["wind", "solar"]},
                           "rated_mw": _num}}},
        "batteries": {"type": "array", "items": {
            "type": "object", "required": ["id", "bus", "capacity"],
            "properties": {"id": _str, "bus": _str, "capacity": _num, "inverter_limit": _num,
                           "efficiency": _num, "min_soc": _num,
                           "initial_soc_policy": {"enum": ["uniform_random", "full"]}}}},
        "base_mva": _num,
        "base_kv": _num,
        "meta": {"type": "object"},
    },
}


# --------------------------------------------------------------------------
# network (de)serialization


def network_to_dict(net: RadialNetwork) -> dict:
    return {
        "buses": [{"id": b.id, "coordinates": list(b.coordinates), "load_ref": b.load_ref,
                   "generation_ref": b.generation_ref, "customer_count": b.customer_count,
                   "customer_category": b.customer_category} for b in net.buses],
        "lines": [{"id": ln.id, "from_bus": ln.from_bus, "to_bus": ln.to_bus,
                   "resistance": ln.resistance, "reactance": ln.reactance, "length": ln.length,
                   "capacity": ln.capacity, "failure_rate_per_km": ln.failure_rate_per_km,
                   "repair_time_dist": ln.repair_time_dist.to_dict()} for ln in net.lines],
        "switchgear": [{"id": s.id, "kind": s.kind, "host_line": s.host_line, "end": s.end,
                        "state": s.state, "sectioning_time": s.sectioning_time} for s in net.switchgear],
        "networks": {k: list(v) for k, v in net.networks.items()},
        "slack_bus": net.slack_bus,
        "loads": [{"id": ld.id, "bus": ld.bus, "p_mw": ld.p_mw, "q_mvar": ld.q_mvar,
                   "peak_mw": ld.peak_mw, "power_factor": ld.power_factor} for ld in net.loads],
        "generators": [{"id": g.id, "bus": g.bus, "kind": g.kind, "rated_mw": g.rated_mw}
                       for g in net.generators],
        "batteries": [{"id": bt.id, "bus": bt.bus, "capacity": bt.spec.capacity,
                       "inverter_limit": bt.spec.inverter_limit, "efficiency": bt.spec.efficiency,
                       "min_soc": bt.spec.min_soc, "initial_soc_policy": bt.spec.initial_soc_policy}
                      for bt in net.batteries],
        "base_mva": net.base_mva,
        "base_kv": net.base_kv,
        "meta": dict(net.meta),
    }


def network_from_dict(d: dict, source: str = "<dict>") -> RadialNetwork:
    """Build a network from its JSON form. Structural problems raise
    ``DatasetError``; topological validity is checked separately."""
    try:
        jsonschema.validate(d, NETWORK_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise DatasetError(f"{source}: schema violation at {where}: {exc.message}") from None
    for key in ("buses", "lines", "switchgear", "loads", "generators", "batteries"):
        seen = set()
        for item in d.get(key, ()):
            if item["id"] in seen:
                raise DatasetError(f"{source}: schema violation: duplicate id {item['id']!r} in {key}")
            seen.add(item["id"])
    try:
        buses = tuple(Bus(b["id"], tuple(b.get("coordinates", (0.0, 0.0))), b.get("load_ref"),
                          b.get("generation_ref"), int(b.get("customer_count", 0)),
                          b.get("customer_category", "household")) for b in d["buses"])
        lines = tuple(Line(ln["id"], ln["from_bus"], ln["to_bus"], float(ln["resistance"]),
                           float(ln["reactance"]), float(ln["length"]), float(ln["capacity"]),
                           float(ln["failure_rate_per_km"]), repair_dist_from_dict(ln["repair_time_dist"]))
                      for ln in d["lines"])
        sw = tuple(Switchgear(s["id"], s["kind"], s["host_line"], s.get("end", "from"),
                              s.get("state", "closed"), s.get("sectioning_time")) for s in d["switchgear"])
        loads = tuple(Load(x["id"], x["bus"], float(x["p_mw"]), float(x["q_mvar"]), float(x["peak_mw"]),
                           float(x.get("power_factor", 0.95))) for x in d.get("loads", ()))
        gens = tuple(GenerationUnit(g["id"], g["bus"], g["kind"], float(g["rated_mw"]))
                     for g in d.get("generators", ()))
        bats = tuple(Battery(b["id"], b["bus"], BatterySpec(
            float(b["capacity"]), float(b.get("inverter_limit", 0.5)), float(b.get("efficiency", 0.95)),
            float(b.get("min_soc", 0.1)), b.get("initial_soc_policy", "uniform_random")))
            for b in d.get("batteries", ()))
    except ValueError as exc:
        raise DatasetError(f"{source}: invalid value: {exc}") from None
    return RadialNetwork(buses, lines, sw, {k: tuple(v) for k, v in d["networks"].items()},
                         d["slack_bus"], loads, gens, bats, float(d.get("base_mva", 10.0)),
                         float(d.get("base_kv", 12.66)), dict(d.get("meta", {})))


def dumps_network(net: RadialNetwork) -> str:
    # json writes floats with repr, which round-trips exactly
    return json.dumps(network_to_dict(net), indent=1) + "\n"


def save_network(net: RadialNetwork, path) -> None:
    Path(path).write_text(dumps_network(net))


def parse_network(text: str, source: str = "<string>", check: bool = True) -> RadialNetwork:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[:exc.pos].encode())
        raise DatasetError(f"{source}: malformed JSON at byte offset {offset} "
                           f"(line {exc.lineno}, column {exc.colno}): {exc.msg}") from None
    net = network_from_dict(d, source)
    if check:
        rep = validate(net)
        if not rep.ok:
            raise DatasetError(f"{source}: invalid network:\n{rep}")
    return net


def load_network(ref) -> RadialNetwork:
    """Load an embedded dataset by id (``ieee33``, ``ieee33_mg``) or a JSON file."""
    if isinstance(ref, RadialNetwork):
        return ref
    ref = str(ref)
    if ref in EMBEDDED:
        text = resources.files(__name__).joinpath("data", f"{ref}.json").read_text()
        return parse_network(text, ref)
    path = Path(ref)
    if not path.exists():
        raise DatasetError(f"network file {ref!r} not found (embedded ids: {', '.join(EMBEDDED)})")
    return parse_network(path.read_text(), str(path))


def default_scenario_config() -> dict:
    text = resources.files(__name__).joinpath("data", "default_scenario.json").read_text()
    return json.loads(text)


# --------------------------------------------------------------------------
# results


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_rows_csv(path, rows, columns=RESULT_COLUMNS) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    return len(rows)


def read_results_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise DatasetError(f"{path}: expected columns {', '.join(RESULT_COLUMNS)}")
        out = []
        for row in reader:
            rec = {"iteration": int(row["iteration"]), "network": row["network"]}
            for c in RESULT_COLUMNS[2:]:
                rec[c] = float(row[c])
            out.append(rec)
    return out


def write_results(result_set, directory, fmt: str = "csv") -> dict:
    """Write ``results.csv`` (or ``results.json``) and ``summary.json`` into
    ``directory`` and return the manifest, which is also saved as
    ``manifest.json``."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rows = result_set.rows()
    files = []
    if fmt == "csv":
        n = write_rows_csv(d / "results.csv", rows)
        files.append({"file": "results.csv", "rows": n})
    else:
        (d / "results.json").write_text(json.dumps(rows, indent=1) + "\n")
        files.append({"file": "results.json", "rows": len(rows)})
    (d / "summary.json").write_text(json.dumps(result_set.summary(), indent=1) + "\n")
    files.append({"file": "summary.json", "rows": 1})
    manifest = {"master_seed": result_set.master_seed, "files": files}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest
