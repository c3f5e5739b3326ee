from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from gridrel.datasets import load_network
from gridrel.network import (DISTRIBUTION, Line, downstream_of, find_sub_systems, relocate_microgrid,
                             validate)
from helpers import bfs_components, chain_network, slack_paths


@pytest.fixture(scope="module")
def ieee33():
    return load_network("ieee33")


@pytest.fixture(scope="module")
def ieee33_mg():
    return load_network("ieee33_mg")


def test_embedded_networks_valid(ieee33, ieee33_mg):
    assert validate(ieee33).ok
    assert validate(ieee33_mg).ok
    assert len(ieee33.buses) == 33 and len(ieee33.lines) == 32


def test_embedded_tree_matches_independent_traversal(ieee33_mg):
    comps = bfs_components([b.id for b in ieee33_mg.buses],
                           [(ln.from_bus, ln.to_bus) for ln in ieee33_mg.lines])
    assert len(comps) == 1
    assert len(ieee33_mg.lines) == len(ieee33_mg.buses) - 1


def test_removed_line_reports_disconnected_bus(ieee33):
    net = replace(ieee33, lines=tuple(ln for ln in ieee33.lines if ln.id != "L17"))
    rep = validate(net)
    assert "disconnected" in rep.codes()
    assert any("B18" in i.ids for i in rep)


def test_loop_line_reports_cycle(ieee33):
    extra = replace(ieee33.lines[0], id="L99", from_bus="B8", to_bus="B21")
    rep = validate(replace(ieee33, lines=ieee33.lines + (extra,)))
    assert "cycle" in rep.codes()


def test_no_failures_single_subsystem(ieee33_mg):
    subs = find_sub_systems(ieee33_mg)
    assert len(subs) == 1
    assert set(subs[0].buses) == {b.id for b in ieee33_mg.buses}
    assert subs[0].has_slack and subs[0].has_generation and subs[0].has_battery


def test_microgrid_line_failure_splits_off_microgrid(ieee33_mg):
    subs = find_sub_systems(ieee33_mg, {"L33"})
    assert len(subs) == 2
    mg = next(s for s in subs if not s.has_slack)
    assert set(mg.buses) == {"M1", "M2", "M3", "M4", "M5"}
    assert mg.has_battery


def test_l5_with_open_disconnectors_matches_bfs(ieee33):
    subs = find_sub_systems(ieee33, {"L5"}, {"D5a", "D5b"})
    edges = [(ln.from_bus, ln.to_bus) for ln in ieee33.lines if ln.id != "L5"]
    expected = set(bfs_components([b.id for b in ieee33.buses], edges))
    assert {frozenset(s.buses) for s in subs} == expected


def test_downstream_examples(ieee33):
    assert downstream_of(ieee33, "L1") == {b.id for b in ieee33.buses} - {"B1"}
    assert downstream_of(ieee33, "L17") == {"B18"}


def test_downstream_matches_path_enumeration(ieee33):
    paths = slack_paths(ieee33)
    for lid in ("L5", "L12", "L25", "L22"):
        assert downstream_of(ieee33, lid) == {b for b, p in paths.items() if lid in p}


def test_downstream_unknown_line(ieee33):
    with pytest.raises(KeyError):
        downstream_of(ieee33, "nope")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 36))
def test_downstream_partitions_buses(k):
    net = load_network("ieee33_mg")
    lid = net.lines[k].id
    down = downstream_of(net, lid)
    rest = {b.id for b in net.buses} - down
    assert down and net.slack_bus in rest
    assert down.isdisjoint(rest) and down | rest == {b.id for b in net.buses}


@settings(max_examples=40, deadline=None)
@given(st.sets(st.integers(0, 36), max_size=8))
def test_removing_k_lines_gives_k_plus_one_subsystems(idx):
    net = load_network("ieee33_mg")
    failed = {net.lines[i].id for i in idx}
    assert len(find_sub_systems(net, failed)) == len(failed) + 1


def test_relocation_keeps_validity(ieee33_mg):
    for b in ("B1", "B18", "B25"):
        moved = relocate_microgrid(ieee33_mg, b)
        assert validate(moved).ok
        assert moved.microgrid_connection_bus == b
    with pytest.raises(ValueError):
        relocate_microgrid(ieee33_mg, "M3")


def test_failure_rate_scales_with_length():
    ln = Line("L", "A", "B", 0.0, 0.0, 2.5, 1.0, 0.07, None)
    assert ln.failure_rate == pytest.approx(0.175)


def test_protecting_breaker_and_partition(ieee33_mg):
    assert ieee33_mg.protecting_breaker["L20"] == "CB1"
    assert ieee33_mg.protecting_breaker["L35"] == "CBM"
    assert ieee33_mg.microgrid_connection_line == "L33"
    assert set(ieee33_mg.networks[DISTRIBUTION]) == {f"B{k}" for k in range(1, 34)}


def test_chain_helper_valid():
    assert validate(chain_network(4)).ok
