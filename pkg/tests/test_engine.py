import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridrel.engine import (ConfigError, Context, ScenarioConfig, fault_schedule, prepare, repair_steps,
                            run_iteration, run_simulation)
from gridrel.network import DISTRIBUTION, MICROGRID, downstream_of
from gridrel.stochastic import IterationStreams, max_discharge
from helpers import chain_network, saved, toy_microgrid_network


def _ds_loads(ctx):
    return ctx.network_loads[DISTRIBUTION]


def test_zero_failure_rates_no_shed():
    cfg = ScenarioConfig(iterations=3, failure_rate_per_km=0.0)
    rs = run_simulation(cfg)
    assert all(r.history.energy.sum() == 0 and r.history.count.sum() == 0 for r in rs.results)
    assert all(v == 0 for r in rs.results for rep in r.reports.values() for v in rep.to_dict().values())


@pytest.mark.parametrize("horizon", [24, 1000, 8760])
def test_longer_horizon_zero_rates_no_shed(horizon):
    res = run_iteration(ScenarioConfig(horizon=horizon, failure_rate_per_km=0.0), 0)
    assert res.history.energy.sum() == 0


def test_forced_fault_timeline_no_support():
    cfg = ScenarioConfig(network="ieee33", failure_rate_per_km=0.0)
    ctx = prepare(cfg)
    trace = []
    res = run_iteration(ctx, 0, forced_faults=[(100, "L5", 3.0)], trace=trace)
    by_t = {rec.t: rec for rec in trace}
    assert sorted(by_t) == [100, 101, 102]
    down = downstream_of(ctx.net, "L5")
    down_idx = [k for k, lid in enumerate(ctx.load_ids) if ctx.net.loads[k].bus in down]
    up_idx = [k for k in range(len(ctx.load_ids)) if k not in down_idx]
    # sectioning hour: the feeder breaker is open, everything is out
    assert np.allclose(by_t[100].shed, by_t[100].demand)
    for t in (101, 102):
        assert np.allclose(by_t[t].shed[down_idx], by_t[t].demand[down_idx])
        assert not by_t[t].shed[up_idx].any()
    expected = sum(ctx.P[down_idx, t].sum() for t in (100, 101, 102)) + ctx.P[up_idx, 100].sum()
    assert res.reports[DISTRIBUTION].ENS == pytest.approx(expected)
    assert res.history.count.sum() == len(ctx.load_ids)
    assert np.allclose(res.history.hours[down_idx], 3.0) and np.allclose(res.history.hours[up_idx], 1.0)


def test_single_point_outage_ens(tmp_path, flat_weather):
    net = chain_network(3, rates=[0.0, 0.5], repair_hours=4.0, load_mw=0.7)
    cfg = ScenarioConfig(network=saved(net, tmp_path), weather_csv=flat_weather, profile={"renewable_peak_mw": None})
    res = run_iteration(cfg, 0, forced_faults=[(500, "L2", 4.0)])
    rep = res.reports[DISTRIBUTION]
    assert rep.ENS == pytest.approx(4 * 0.7)
    assert (rep.lambda_s, rep.U_s, rep.SAIFI, rep.SAIDI, rep.CAIDI) == (1, 4, 1, 4, 4)


def test_full_support_island_energy_balance():
    cfg = ScenarioConfig(microgrid_mode="full_support", failure_rate_per_km=0.0)
    ctx = prepare(cfg)
    trace = []
    run_iteration(ctx, 0, forced_faults=[(4000, "L28", 12.0)], trace=trace)
    island = {"B29", "B30", "B31", "B32", "B33", "M1", "M2", "M3", "M4", "M5"}
    idx = [k for k, ld in enumerate(ctx.net.loads) if ld.bus in island]
    spec = ctx.bat_spec[0]
    checked = 0
    for prev, rec in zip(trace, trace[1:]):
        if not rec.islanded_with:
            continue
        assert rec.islanded_with == {"B29", "B30", "B31", "B32", "B33"}
        h = rec.t % ctx.hours
        deliverable = max_discharge(spec, prev.soc[0], 1.0, spec.min_energy)
        expected = max(0.0, rec.demand[idx].sum() - ctx.G[:, h].sum() - deliverable)
        assert rec.shed[idx].sum() == pytest.approx(expected, abs=1e-8)
        checked += 1
    assert checked == 11


def test_no_support_microgrid_self_supply():
    cfg = ScenarioConfig(microgrid_mode="no_support", failure_rate_per_km=0.0)
    ctx = prepare(cfg)
    trace = []
    run_iteration(ctx, 1, forced_faults=[(3000, "L3", 20.0)], trace=trace)
    mg = ctx.network_loads[MICROGRID]
    spec = ctx.bat_spec[0]
    for prev, rec in zip(trace, trace[1:]):
        if not rec.failed:
            continue
        assert rec.breaker_state == "open" and not rec.islanded_with
        h = rec.t % ctx.hours
        deliverable = max_discharge(spec, prev.soc[0], 1.0, spec.min_energy)
        expected = max(0.0, rec.demand[mg].sum() - ctx.G[:, h].sum() - deliverable)
        assert rec.shed[mg].sum() == pytest.approx(expected, abs=1e-8)


def test_determinism_and_common_random_numbers():
    a = run_iteration(ScenarioConfig(), 17)
    b = run_iteration(ScenarioConfig(), 17)
    assert a.reports == b.reports
    assert np.array_equal(a.history.energy, b.history.energy)
    ctxs = [prepare(ScenarioConfig(microgrid_mode=m)) for m in ("no_support", "full_support", "limited_support")]
    streams = [IterationStreams(42, 5, c.n_lines) for c in ctxs]
    schedules = [fault_schedule(c, s) for c, s in zip(ctxs, streams)]
    assert schedules[0] == schedules[1] == schedules[2]
    assert schedules[0]


def test_worker_count_invariance():
    cfg = ScenarioConfig(iterations=24, microgrid_mode="limited_support")
    one = run_simulation(cfg, workers=1)
    two = run_simulation(cfg, workers=2)
    assert one.rows() == two.rows()
    assert [r.iteration for r in two.results] == list(range(24))


def test_iterations_one_gives_one_row_per_network():
    rs = run_simulation(ScenarioConfig(iterations=1))
    assert len(rs) == 1 and len(rs.rows()) == 2


def test_progress_callback():
    seen = []
    run_simulation(ScenarioConfig(iterations=3), progress=lambda d, n: seen.append((d, n)))
    assert seen[-1] == (3, 3)


def test_bookkeeping_load_flow_runs_on_islands():
    res = run_iteration(ScenarioConfig(microgrid_mode="full_support", failure_rate_per_km=0.0), 0,
                        forced_faults=[(10, "L28", 5.0)])
    assert res.diagnostics["load_flows"] > 0 and res.diagnostics["load_flow_failures"] == 0


def test_toy_microgrid_network(tmp_path, flat_weather):
    cfg = ScenarioConfig(network=saved(toy_microgrid_network(), tmp_path), weather_csv=flat_weather,
                         microgrid_mode="full_support", failure_rate_per_km=0.0,
                         battery={"initial_soc_policy": "full"})
    ctx = Context(cfg)
    trace = []
    res = run_iteration(ctx, 0, forced_faults=[(10, "L2", 3.0)], trace=trace)
    # no wind; after the sectioning hour the full battery carries B3 and M2 (0.3 MW)
    assert res.reports[MICROGRID].ENS == 0.0
    assert res.reports[DISTRIBUTION].ENS == pytest.approx(0.4)
    assert [sorted(r.islanded_with) for r in trace] == [[], ["B3"], ["B3"]]
    assert trace[-1].soc[0] == pytest.approx(1.0 - 0.7 / 0.95)


def test_repair_steps():
    assert repair_steps(3.0, 1.0) == 3 and repair_steps(2.2, 1.0) == 3 and repair_steps(0.1, 1.0) == 1


@pytest.mark.parametrize("kw, field", [
    (dict(iterations=0), "iterations"), (dict(microgrid_mode="x"), "microgrid_mode"),
    (dict(dt=0), "dt"), (dict(workers=0), "workers"), (dict(repair={"bad": 1}), "repair"),
    (dict(battery={"size": 1}), "battery"), (dict(horizon=10, dt=3), "horizon"),
])
def test_config_errors_name_field(kw, field):
    with pytest.raises(ConfigError) as exc:
        ScenarioConfig(**kw)
    assert exc.value.field == field


def test_unknown_config_key():
    with pytest.raises(ConfigError) as exc:
        ScenarioConfig.from_dict({"iterations": 2, "colour": "red"})
    assert exc.value.field == "colour"


def test_config_round_trip():
    cfg = ScenarioConfig(iterations=7, repair={"quantile_hours": 3.0})
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["no_support", "full_support", "limited_support"]))
def test_iteration_invariants(it, mode):
    cfg = ScenarioConfig(microgrid_mode=mode)
    trace = []
    res = run_iteration(cfg, it, trace=trace)
    for rec in trace:
        assert (rec.shed >= 0).all() and (rec.shed <= rec.demand + 1e-9).all()
        served = rec.demand - rec.shed
        assert served.sum() + rec.shed.sum() == pytest.approx(rec.demand.sum(), abs=1e-8)
        assert all(0.1 - 1e-9 <= s <= 1.0 + 1e-9 for s in rec.soc)
        if "L33" in rec.failed:
            assert rec.breaker_state == "open"
    assert (res.history.hours <= cfg.horizon).all()
    for rep in res.reports.values():
        assert abs(rep.CAIDI * rep.SAIFI - rep.SAIDI) < 1e-9
