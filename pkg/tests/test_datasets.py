import json

import numpy as np
import pytest

from gridrel.datasets import (EMBEDDED, RESULT_COLUMNS, DatasetError, dumps_network, load_network,
                              parse_network, read_results_csv, write_results, write_rows_csv)
from gridrel.datasets.ieee33 import BRANCHES, NOMINAL_LOADS, build_ieee33
from gridrel.engine import ResultSet, ScenarioConfig, run_simulation
from gridrel.network import DISTRIBUTION, MICROGRID, validate


@pytest.mark.parametrize("name", EMBEDDED)
def test_embedded_round_trip_bit_identical(name):
    net = load_network(name)
    text = dumps_network(net)
    again = parse_network(text)
    assert again == net
    assert dumps_network(again) == text


def test_shipped_files_match_builder():
    assert load_network("ieee33") == build_ieee33(microgrid=False)
    assert load_network("ieee33_mg") == build_ieee33(microgrid=True)


def test_ieee33_mg_layout():
    net = load_network("ieee33_mg")
    assert len(net.networks[DISTRIBUTION]) == 33 and len(net.networks[MICROGRID]) == 5
    assert net.microgrid_connection_bus == "B33"
    assert validate(net).ok
    # canonical branch list and nominal loads
    ends = {(ln.from_bus, ln.to_bus) for ln in net.lines}
    assert all((f"B{a}", f"B{b}") in ends for a, b, _, _ in BRANCHES)
    loads = {ld.bus: ld for ld in net.loads}
    assert all(loads[f"B{b}"].p_mw == pytest.approx(p / 1000) for b, (p, _) in NOMINAL_LOADS.items())
    total_peak_mg = sum(ld.peak_mw for ld in net.loads if ld.bus.startswith("M"))
    assert total_peak_mg == pytest.approx(0.2)


def test_truncated_file_names_byte_offset(tmp_path):
    text = dumps_network(load_network("ieee33"))
    cut = text[:1234]
    with pytest.raises(DatasetError, match=r"byte offset \d+"):
        parse_network(cut, "cut.json")
    path = tmp_path / "cut.json"
    path.write_text(cut)
    with pytest.raises(DatasetError, match="cut.json"):
        load_network(path)


def test_duplicate_bus_id_is_schema_violation():
    d = json.loads(dumps_network(load_network("ieee33")))
    d["buses"].append(dict(d["buses"][4]))
    with pytest.raises(DatasetError, match="schema violation.*'B5'"):
        parse_network(json.dumps(d))


def test_missing_field_is_schema_violation():
    d = json.loads(dumps_network(load_network("ieee33")))
    del d["lines"][3]["capacity"]
    with pytest.raises(DatasetError, match="schema violation at lines/3"):
        parse_network(json.dumps(d))


def test_invalid_topology_rejected():
    d = json.loads(dumps_network(load_network("ieee33")))
    d["lines"] = d["lines"][:-1]
    with pytest.raises(DatasetError, match="disconnected"):
        parse_network(json.dumps(d))


def test_unknown_reference():
    with pytest.raises(DatasetError, match="not found"):
        load_network("no_such_network")


def test_empty_result_set_headers_only(tmp_path):
    rs = ResultSet(ScenarioConfig(iterations=1), [DISTRIBUTION], [])
    manifest = write_results(rs, tmp_path)
    assert (tmp_path / "results.csv").read_text() == ",".join(RESULT_COLUMNS) + "\n"
    assert manifest["files"][0] == {"file": "results.csv", "rows": 0}


def test_results_round_trip(tmp_path):
    rs = run_simulation(ScenarioConfig(iterations=6, master_seed=3))
    manifest = write_results(rs, tmp_path)
    back = read_results_csv(tmp_path / "results.csv")
    assert back == rs.rows()
    assert manifest["files"][0]["rows"] == 12 and manifest["master_seed"] == 3
    assert json.loads((tmp_path / "manifest.json").read_text()) == manifest
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["networks"][DISTRIBUTION]["ENS"]["mean"] == pytest.approx(rs.values(DISTRIBUTION).mean())
    write_results(rs, tmp_path / "j", "json")
    assert json.loads((tmp_path / "j" / "results.json").read_text()) == rs.rows()


def test_full_precision_floats(tmp_path):
    x = 0.1 + 0.2
    rows = [{"iteration": 0, "network": "n", "ENS_MWh": x, "CENS": np.pi, "SAIFI": 1 / 3,
             "SAIDI_h": 2.0, "CAIDI_h": 6.0}]
    write_rows_csv(tmp_path / "r.csv", rows)
    assert read_results_csv(tmp_path / "r.csv") == rows


def test_bad_results_header(tmp_path):
    (tmp_path / "r.csv").write_text("a,b\n1,2\n")
    with pytest.raises(DatasetError):
        read_results_csv(tmp_path / "r.csv")
