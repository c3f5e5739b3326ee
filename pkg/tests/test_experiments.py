import csv
import warnings

import pytest

from gridrel.engine import ScenarioConfig
from gridrel.experiments import FactorialDesign, run_factorial, run_location_sweep, run_scenarios
from gridrel.network import DISTRIBUTION, MICROGRID
from helpers import chain_network, saved

SMALL = ScenarioConfig(iterations=40)


def test_zero_failure_scenarios_identical(tmp_path):
    study = run_scenarios(SMALL.replace(iterations=10, failure_rate_per_km=0.0), tmp_path)
    for n in (DISTRIBUTION, MICROGRID):
        ks = study.stats[n]["kolmogorov_smirnov"]
        assert all(r["statistic"] == 0 and r["p_value"] == 1.0 for r in ks.values())
        assert all(study.mean(s, n) == 0 for s in ("s1", "s2", "s3"))
    d = tmp_path / "scenarios"
    for name in ("stats.json", "means.csv", "boxplot.csv", "report.md", "s1/results.csv", "s3/manifest.json"):
        assert (d / name).exists()


def test_small_scenario_study_orders_microgrid(tmp_path):
    study = run_scenarios(SMALL.replace(iterations=200), tmp_path, plots=True)
    assert study.mean("s3", MICROGRID) < study.mean("s1", MICROGRID)
    assert study.mean("s2", DISTRIBUTION) <= study.mean("s1", DISTRIBUTION)
    assert (tmp_path / "scenarios" / "boxplot.svg").read_text().startswith("<?xml")
    report = (tmp_path / "scenarios" / "report.md").read_text()
    assert "reduction vs s1" in report and "KS D" in report


def test_design_size_and_combinations():
    d = FactorialDesign()
    assert len(d) == 18 and len(d.combinations()) == 18
    assert len({tuple(c.values()) for c in d.combinations()}) == 18
    with pytest.raises(ValueError):
        FactorialDesign({"colour": [1]})
    with pytest.raises(ValueError):
        FactorialDesign({"failure_rate": [0.1, 0.1]})


def test_design_apply_recalibrates_repair():
    cfg = FactorialDesign().apply(SMALL, {"battery_capacity": 2.0, "repair_quantile_hours": 3.0,
                                          "failure_rate": 0.09})
    assert cfg.battery["capacity"] == 2.0 and cfg.failure_rate_per_km == 0.09
    assert cfg.repair == {"shape": 2.0, "quantile_hours": 3.0, "quantile_prob": 0.67}


def test_small_battery_warns_in_limited_support():
    d = FactorialDesign({"battery_capacity": [0.5, 1.0]})
    with pytest.warns(UserWarning, match="0.5 MWh"):
        d.check(SMALL.replace(microgrid_mode="limited_support"))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        FactorialDesign({"battery_capacity": [1.0, 2.0]}).check(SMALL.replace(microgrid_mode="limited_support"))


def test_single_level_design(tmp_path):
    d = FactorialDesign({"failure_rate": [0.07]})
    res = run_factorial(d, SMALL.replace(iterations=10), tmp_path)
    assert len(res.cells) == 2  # one cell, two networks
    assert res.main_effect(DISTRIBUTION, "failure_rate") == 0.0
    rows = list(csv.DictReader(open(tmp_path / "factorial" / "difference_of_differences.csv")))
    assert rows == []


def test_factorial_every_cell_once(tmp_path):
    d = FactorialDesign({"battery_capacity": [1.0, 2.0], "failure_rate": [0.05, 0.09]})
    res = run_factorial(d, SMALL.replace(iterations=30, microgrid_mode="limited_support"), tmp_path, plots=True)
    rows = list(csv.DictReader(open(tmp_path / "factorial" / "cells.csv")))
    keys = [(r["battery_capacity"], r["failure_rate"], r["network"]) for r in rows]
    assert len(keys) == len(set(keys)) == 8
    assert res.cell_mean(DISTRIBUTION, battery_capacity=1.0, failure_rate=0.09) > \
        res.cell_mean(DISTRIBUTION, battery_capacity=1.0, failure_rate=0.05)
    inter = res.interaction(MICROGRID, "battery_capacity", "failure_rate")
    assert set(inter) == {"network", "factor_a", "factor_b", "dod", "se"}
    assert (tmp_path / "factorial" / "interaction.svg").exists()


def test_single_bus_sweep(tmp_path):
    res = run_location_sweep(SMALL.replace(iterations=5), ["B7"])
    assert list(res.ens) == ["B7"] and res.best == "B7"


def test_sweep_is_deterministic(tmp_path):
    base = SMALL.replace(iterations=20, microgrid_mode="limited_support")
    a = run_location_sweep(base, ["B10", "B18", "B25"], tmp_path / "a", plots=True)
    b = run_location_sweep(base, ["B10", "B18", "B25"], tmp_path / "b")
    assert a.ens == b.ens and a.microgrid_ens == b.microgrid_ens
    assert (tmp_path / "a" / "location" / "heatmap.csv").read_bytes() == \
        (tmp_path / "b" / "location" / "heatmap.csv").read_bytes()
    assert (tmp_path / "a" / "location" / "heatmap.svg").exists()


def test_sweep_needs_microgrid(tmp_path):
    with pytest.raises(ValueError):
        run_location_sweep(ScenarioConfig(network=saved(chain_network(3), tmp_path), iterations=2))
