"""Sequential Monte Carlo driver.

One iteration simulates one year in fixed increments. Increments in which
every line is healthy and the microgrid breaker is closed cannot shed load,
so the loop jumps straight to the next fault; everything else follows the
increment procedure: apply new faults, step the microgrid controller, split
the network into sub-systems, dispatch storage and shed load per sub-system,
and update the load-point history.

Failures are drawn per increment as Bernoulli trials, realized by inverting
tabulated uniforms into geometric gaps (see ``IterationStreams``), so runs
with different modes or parameter levels share their random numbers.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache

import numpy as np

from .controller import ControllerMode, ControllerState, MODES, controller_step, support_budget
from .indices import IndexReport, LoadPointHistory, compute_indices
from .network import DISTRIBUTION, MICROGRID, RadialNetwork, relocate_microgrid, validate
from .powerflow import RadialTree
from .shedding import ShedProblem, solve_shed
from .stochastic import (BatterySpec, BatteryState, IterationStreams, LoadSpec, ProfileConfig,
                         ProfileSet, battery_dispatch, calibrate_gamma, failure_probability,
                         generate_profiles, geometric_gap, max_charge, max_discharge)

# Placeholder interruption costs per MWh by customer category (not tariff data).
DEFAULT_CENS = {"industry": 180000.0, "trade": 140000.0, "office": 120000.0,
                "farm": 25000.0, "household": 10000.0}

# Dispatch preference inside the LP: renewables first, then the grid, then storage.
SLACK_COST = 1e-3
BATTERY_COST = 2e-3
SLACK_LIMIT = 1e6

# Spawn key of the profile stream; iteration streams use one-element keys.
PROFILE_STREAM = (0x50524F46, 0)


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ScenarioConfig:
    network: str = "ieee33_mg"
    microgrid_mode: str = "no_support"
    reserve_hours: float = 4.0
    iterations: int = 5000
    horizon: int = 8760
    dt: float = 1.0
    master_seed: int = 42
    profile: dict = field(default_factory=dict)
    weather_csv: str | None = None
    cens_costs: dict = field(default_factory=lambda: dict(DEFAULT_CENS))
    sectioning_time: float | None = 1.0
    battery: dict = field(default_factory=dict)
    failure_rate_per_km: float | None = None
    repair: dict | None = None
    microgrid_location: str | None = None
    run_load_flow: bool = True
    workers: int = 1

    def __post_init__(self):
        if not isinstance(self.iterations, int) or self.iterations < 1:
            raise ConfigError("iterations", f"must be an integer >= 1, got {self.iterations!r}")
        if not self.dt > 0:
            raise ConfigError("dt", "must be positive")
        if self.horizon <= 0 or abs(self.horizon / self.dt - round(self.horizon / self.dt)) > 1e-9:
            raise ConfigError("horizon", "must be a positive multiple of dt")
        if self.microgrid_mode not in MODES:
            raise ConfigError("microgrid_mode", f"must be one of {', '.join(MODES)}")
        if not self.reserve_hours > 0:
            raise ConfigError("reserve_hours", "must be positive")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("workers", "must be an integer >= 1")
        if self.sectioning_time is not None and not self.sectioning_time > 0:
            raise ConfigError("sectioning_time", "must be positive")
        if self.failure_rate_per_km is not None and self.failure_rate_per_km < 0:
            raise ConfigError("failure_rate_per_km", "must be nonnegative")
        for k, v in self.cens_costs.items():
            if not isinstance(v, (int, float)) or v < 0:
                raise ConfigError("cens_costs", f"cost for {k!r} must be a nonnegative number")
        if self.repair is not None:
            extra = set(self.repair) - {"shape", "quantile_hours", "quantile_prob"}
            if extra:
                raise ConfigError("repair", f"unknown keys {sorted(extra)}")
        extra = set(self.battery) - {f.name for f in fields(BatterySpec)}
        if extra:
            raise ConfigError("battery", f"unknown keys {sorted(extra)}")
        extra = set(self.profile) - {f.name for f in fields(ProfileConfig)} - {"loads", "wind_units", "solar_units"}
        if extra:
            raise ConfigError("profile", f"unknown keys {sorted(extra)}")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        for k in d:
            if k not in known:
                raise ConfigError(k, "unknown configuration key")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError("config", str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"malformed JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(d, dict):
            raise ConfigError(str(path), "top level must be an object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


# --------------------------------------------------------------------------
# preparation


def build_network(config: ScenarioConfig) -> RadialNetwork:
    """The configured network with every override applied and validated."""
    from .datasets import load_network

    net = load_network(config.network)
    if config.microgrid_location is not None:
        net = relocate_microgrid(net, config.microgrid_location)
    lines = net.lines
    if config.failure_rate_per_km is not None:
        lines = tuple(replace(ln, failure_rate_per_km=float(config.failure_rate_per_km)) for ln in lines)
    if config.repair is not None:
        r = {"shape": 2.0, "quantile_hours": 2.0, "quantile_prob": 0.67, **config.repair}
        dist = calibrate_gamma(float(r["shape"]), float(r["quantile_hours"]), float(r["quantile_prob"]))
        lines = tuple(replace(ln, repair_time_dist=dist) for ln in lines)
    sw = net.switchgear
    if config.sectioning_time is not None:
        sw = tuple(replace(s, sectioning_time=float(config.sectioning_time))
                   if s.kind == "circuit_breaker" else s for s in sw)
    policy = "full" if config.microgrid_mode == "limited_support" else "uniform_random"
    bats = tuple(replace(b, spec=replace(b.spec, **{"initial_soc_policy": policy, **config.battery}))
                 for b in net.batteries)
    net = replace(net, lines=lines, switchgear=sw, batteries=bats)
    rep = validate(net)
    if not rep.ok:
        raise ConfigError("network", f"invalid network after overrides:\n{rep}")
    return net


@lru_cache(maxsize=8)
def _profiles_cached(key: str) -> ProfileSet:
    d = json.loads(key)
    seed = d.pop("_seed")
    cfg = ProfileConfig(
        loads=tuple(LoadSpec(*x) for x in d.pop("loads")),
        wind_units=tuple(tuple(x) for x in d.pop("wind_units")),
        solar_units=tuple(tuple(x) for x in d.pop("solar_units")),
        **d)
    ss = np.random.SeedSequence(seed, spawn_key=PROFILE_STREAM)
    return generate_profiles(cfg, np.random.Generator(np.random.PCG64(ss)))


def build_profiles(config: ScenarioConfig, net: RadialNetwork) -> ProfileSet:
    """Hourly profiles for ``net``; determined by the master seed alone."""
    cat = {b.id: b.customer_category for b in net.buses}
    loads = [[ld.bus, ld.peak_mw, ld.power_factor, cat[ld.bus]] for ld in net.loads]
    wind = [[g.id, g.rated_mw] for g in net.generators if g.kind == "wind"]
    solar = [[g.id, g.rated_mw] for g in net.generators if g.kind == "solar"]
    horizon = int(math.ceil(config.horizon))
    opts = {"horizon": max(horizon, 1), **config.profile}
    if config.weather_csv:
        opts["weather_csv"] = config.weather_csv
    key = json.dumps({"_seed": int(config.master_seed), "loads": loads, "wind_units": wind,
                      "solar_units": solar, **opts}, sort_keys=True)
    try:
        return _profiles_cached(key)
    except (TypeError, ValueError) as exc:
        raise ConfigError("profile", str(exc)) from None


@dataclass
class _Component:
    buses: np.ndarray
    loads: np.ndarray
    gens: np.ndarray
    bats: np.ndarray
    has_slack: bool
    dead: bool
    # local tree: node 0 is the first bus; loads/gens mapped to local nodes
    load_node: np.ndarray
    gen_node: np.ndarray
    bat_node: np.ndarray
    slack_node: int
    line_from: np.ndarray
    line_to: np.ndarray
    capacity: np.ndarray
    lines: tuple
    bus_ids: tuple
    mg_loads: np.ndarray      # mask over self.loads
    ds_loads_present: bool
    safe: bool                # no line can ever exceed its capacity


class Context:
    """Everything an iteration needs that does not change between iterations."""

    def __init__(self, config: ScenarioConfig, net: RadialNetwork | None = None):
        self.config = config
        self.net = net = net if net is not None else build_network(config)
        self.mode = ControllerMode(config.microgrid_mode, config.reserve_hours)
        self.profiles = build_profiles(config, net)
        self.dt = float(config.dt)
        self.n_steps = int(round(config.horizon / config.dt))
        self.hours = self.profiles.horizon

        self.line_ids = tuple(ln.id for ln in net.lines)
        self.n_lines = len(net.lines)
        self.p_fail = np.array([failure_probability(ln.failure_rate, self.dt) for ln in net.lines])
        self.repair = tuple(ln.repair_time_dist for ln in net.lines)
        self.sec_time = np.array([net.sectioning_time_for(lid) for lid in self.line_ids])
        host = {sw.id: sw.host_line for sw in net.breakers}
        self.breaker_host = np.array([net.line_index[host[b]] if (b := net.protecting_breaker[lid]) else -1
                                      for lid in self.line_ids])
        bidx = net.bus_index
        self.line_ends = np.array([[bidx[ln.from_bus], bidx[ln.to_bus]] for ln in net.lines], dtype=int)
        self.line_down = np.array([bidx[net.downstream_bus_of_line[lid]] for lid in self.line_ids], dtype=int)
        self.slack = bidx[net.slack_bus]

        # loads
        bus_of = {b.id: b for b in net.buses}
        order = {b: k for k, b in enumerate(self.profiles.load_buses)}
        self.load_ids = tuple(ld.id for ld in net.loads)
        self.load_bus = np.array([bidx[ld.bus] for ld in net.loads], dtype=int)
        rows = [order[ld.bus] for ld in net.loads]
        self.P = np.ascontiguousarray(self.profiles.p_load[rows]) if rows else np.zeros((0, self.hours))
        self.Q = np.ascontiguousarray(self.profiles.q_load[rows]) if rows else np.zeros((0, self.hours))
        self.customers = np.array([bus_of[ld.bus].customer_count for ld in net.loads], dtype=float)
        cats = [bus_of[ld.bus].customer_category for ld in net.loads]
        try:
            self.cens = np.array([float(config.cens_costs[c]) for c in cats])
        except KeyError as exc:
            raise ConfigError("cens_costs", f"no cost for category {exc.args[0]!r}") from None
        self.load_network = tuple(net.network_of.get(ld.bus, DISTRIBUTION) for ld in net.loads)
        self.is_mg_load = np.array([n == MICROGRID for n in self.load_network], dtype=bool)
        self.lp_cost = self.cens.copy()
        if self.mode.supportive and self.is_mg_load.any():
            # the microgrid serves its own customers before exporting
            self.lp_cost[self.is_mg_load] += 10.0 * max(float(self.cens.max()), 1.0)

        # generation and storage
        self.gen_bus = np.array([bidx[g.bus] for g in net.generators], dtype=int)
        self.G = (np.array([self.profiles.generation[g.id] for g in net.generators])
                  if net.generators else np.zeros((0, self.hours)))
        self.bat_bus = np.array([bidx[b.bus] for b in net.batteries], dtype=int)
        self.bat_spec = tuple(b.spec for b in net.batteries)
        mg_load_series = self.P[self.is_mg_load].sum(axis=0) if self.is_mg_load.any() else np.zeros(1)
        self.peak_mg_load = float(mg_load_series.max())
        self.reserve_floor = tuple(support_budget(self.mode, s, self.peak_mg_load) for s in self.bat_spec)

        self.has_mg = net.microgrid_connection_line is not None
        self.mg_line = net.line_index[net.microgrid_connection_line] if self.has_mg else -1
        self.mg_sec = net.sectioning_time_for(net.microgrid_connection_line) if self.has_mg else 0.0
        self.peak_bound = {}
        self._topology: dict = {}

        self.networks = [DISTRIBUTION] + ([MICROGRID] if self.is_mg_load.any() else [])
        self.network_loads = {n: np.flatnonzero([x == n for x in self.load_network]) for n in self.networks}
        self.peak_load = self.P.max(axis=1) if len(self.P) else np.zeros(0)
        self.rated = self.G.max(axis=1) if len(self.G) else np.zeros(0)

    # -- topology ----------------------------------------------------------

    def topology(self, failed: tuple, sectioning: tuple, mg_open: bool) -> list[_Component]:
        key = (failed, sectioning, mg_open)
        comps = self._topology.get(key)
        if comps is None:
            if len(self._topology) > 20000:
                self._topology.clear()
            comps = self._topology[key] = self._build_topology(failed, sectioning, mg_open)
        return comps

    def _build_topology(self, failed, sectioning, mg_open) -> list[_Component]:
        net = self.net
        nb = len(net.buses)
        removed = set(failed) - set(sectioning)
        for i in sectioning:
            if self.breaker_host[i] >= 0:
                removed.add(int(self.breaker_host[i]))
        if mg_open:
            removed.add(self.mg_line)
        parent = list(range(nb))

        def root(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for k, (a, b) in enumerate(self.line_ends.tolist()):
            if k not in removed:
                parent[root(a)] = root(b)
        dead = set()
        for i in sectioning:
            a, b = self.line_ends[i]
            dead.add(root(int(self.line_down[i])))
            if i not in removed:
                dead.add(root(int(a)))
        groups: dict[int, list[int]] = {}
        for x in range(nb):
            groups.setdefault(root(x), []).append(x)
        out = []
        for r, members in groups.items():
            out.append(self._component(r, members, removed, r in dead))
        return out

    def _component(self, r, members, removed, dead) -> _Component:
        net = self.net
        mset = set(members)
        local = {b: k for k, b in enumerate(members)}
        lines = [k for k, (a, b) in enumerate(self.line_ends.tolist()) if k not in removed and a in mset]
        loads = np.array([k for k, b in enumerate(self.load_bus) if b in mset], dtype=int)
        gens = np.array([k for k, b in enumerate(self.gen_bus) if b in mset], dtype=int)
        bats = np.array([k for k, b in enumerate(self.bat_bus) if b in mset], dtype=int)
        lf = np.array([local[self.line_ends[k][0]] for k in lines], dtype=int)
        lt = np.array([local[self.line_ends[k][1]] for k in lines], dtype=int)
        cap = np.array([net.lines[k].capacity for k in lines])
        has_slack = self.slack in mset
        bound = (self.peak_load[loads].sum() if len(loads) else 0.0) + \
            (self.rated[gens].sum() if len(gens) else 0.0) + \
            sum(self.bat_spec[b].inverter_limit for b in bats)
        safe = not len(cap) or bound <= cap.min()
        mg = self.is_mg_load[loads] if len(loads) else np.zeros(0, bool)
        ds_present = any(net.network_of.get(net.buses[b].id) == DISTRIBUTION for b in members)
        return _Component(
            buses=np.array(members, dtype=int), loads=loads, gens=gens, bats=bats,
            has_slack=has_slack, dead=dead,
            load_node=np.array([local[b] for b in self.load_bus[loads]], dtype=int),
            gen_node=np.array([local[b] for b in self.gen_bus[gens]], dtype=int),
            bat_node=np.array([local[b] for b in self.bat_bus[bats]], dtype=int),
            slack_node=local[self.slack] if has_slack else -1,
            line_from=lf, line_to=lt, capacity=cap,
            lines=tuple(self.line_ids[k] for k in lines),
            bus_ids=tuple(net.buses[b].id for b in members),
            mg_loads=mg, ds_loads_present=ds_present, safe=safe)


@lru_cache(maxsize=4)
def _context_cached(key: str) -> Context:
    return Context(ScenarioConfig.from_dict(json.loads(key)))


def prepare(config: ScenarioConfig) -> Context:
    """Context for ``config``, reused across calls within a process."""
    d = config.to_dict()
    d["workers"] = 1
    d["iterations"] = 1
    return _context_cached(json.dumps(d, sort_keys=True))


# --------------------------------------------------------------------------
# iteration


@dataclass
class IterationResult:
    iteration: int
    reports: dict[str, IndexReport]
    history: LoadPointHistory
    diagnostics: dict


@dataclass
class StepRecord:
    t: int
    demand: np.ndarray
    shed: np.ndarray
    breaker_state: str
    islanded_with: frozenset
    soc: tuple
    failed: tuple


def fault_schedule(ctx: Context, streams: IterationStreams) -> list[tuple[int, int, float]]:
    """``(step, line index, repair hours)`` for every fault of the iteration."""
    events = []
    for i in range(ctx.n_lines):
        p = float(ctx.p_fail[i])
        if p <= 0:
            continue
        t0, j = 0, 0
        while True:
            g = geometric_gap(streams.failure_uniform(i, j), p)
            if t0 + g - 1 >= ctx.n_steps:
                break
            f = int(t0 + g - 1)
            r = float(ctx.repair[i].ppf(streams.repair_uniform(i, j)))
            events.append((f, i, r))
            t0 = f + repair_steps(r, ctx.dt)
            j += 1
    events.sort()
    return events


def repair_steps(hours: float, dt: float) -> int:
    """Increments a line stays failed; repair completes at the end of the last one."""
    return max(1, math.ceil(hours / dt - 1e-9))


def run_iteration(config_or_ctx, iteration: int, forced_faults=None, trace: list | None = None) -> IterationResult:
    """Simulate one year.

    ``forced_faults`` replaces the random fault schedule with
    ``(hour, line id, repair hours)`` triples. When ``trace`` is a list, a
    ``StepRecord`` is appended for every simulated increment.
    """
    ctx = config_or_ctx if isinstance(config_or_ctx, Context) else prepare(config_or_ctx)
    dt = ctx.dt
    streams = IterationStreams(ctx.config.master_seed, iteration, ctx.n_lines)
    if forced_faults is None:
        events = fault_schedule(ctx, streams)
    else:
        events = sorted((int(round(h / dt)), ctx.net.line_index[lid], float(r)) for h, lid, r in forced_faults)

    failed = np.zeros(ctx.n_lines, dtype=bool)
    rem_repair = np.zeros(ctx.n_lines)
    rem_sec = np.zeros(ctx.n_lines)
    ctrl = ControllerState()
    hist = LoadPointHistory(ctx.load_ids)
    bats = [BatteryState(s.capacity) for s in ctx.bat_spec]
    diag = {"faults": 0, "lp_fallbacks": 0, "infeasible": 0, "load_flows": 0,
            "load_flow_failures": 0, "min_voltage": 1.0}
    nl = len(ctx.load_ids)
    ev, t = 0, 0
    while t < ctx.n_steps:
        if not failed.any() and ctrl.closed and ctrl.sectioning_remaining <= 0:
            if ev >= len(events) or events[ev][0] >= ctx.n_steps:
                break
            if events[ev][0] > t:
                hist.gap()
                t = events[ev][0]
            # a new failure event begins: draw the storage state
            for b, spec in zip(bats, ctx.bat_spec):
                b.soc = spec.initial_soc(streams.soc)
        new = []
        while ev < len(events) and events[ev][0] == t:
            _, i, r = events[ev]
            ev += 1
            if failed[i]:
                continue
            failed[i] = True
            rem_repair[i] = r
            rem_sec[i] = ctx.sec_time[i]
            new.append(i)
        diag["faults"] += len(new)

        idx = np.flatnonzero(failed)
        if ctx.has_mg:
            sec = max([ctx.mg_sec] + [float(ctx.sec_time[i]) for i in new])
            ctrl = controller_step(ctx.mode, ctrl, ctx.net, [ctx.line_ids[i] for i in idx], dt,
                                   new_outage=bool(new), sectioning_time=sec)
        sectioning = tuple(int(i) for i in idx if rem_sec[i] > 1e-9)
        comps = ctx.topology(tuple(int(i) for i in idx), sectioning, ctx.has_mg and not ctrl.closed)
        h = int(t * dt) % ctx.hours
        demand = ctx.P[:, h]
        shed = np.zeros(nl)
        for comp in comps:
            _serve(ctx, comp, h, demand, shed, bats, diag)
        hist.record(shed, dt)
        if trace is not None:
            trace.append(StepRecord(t, demand.copy(), shed.copy(), ctrl.breaker_state, ctrl.islanded_with,
                                    tuple(b.soc for b in bats), tuple(ctx.line_ids[i] for i in idx)))
        # end of increment: repairs and sectioning progress
        if len(idx):
            rem_repair[idx] -= dt
            rem_sec[idx] = np.maximum(rem_sec[idx] - dt, 0.0)
            done = idx[rem_repair[idx] <= 1e-9]
            failed[done] = False
            rem_repair[done] = 0.0
            rem_sec[done] = 0.0
        t += 1

    reports = {n: compute_indices(hist.subset(ix), ctx.customers[ix], ctx.cens[ix])
               for n, ix in ctx.network_loads.items()}
    return IterationResult(iteration, reports, hist, diag)


def _serve(ctx: Context, comp: _Component, h: int, demand, shed, bats, diag):
    """Shed and storage dispatch for one sub-system in one increment."""
    loads = comp.loads
    d = demand[loads]
    dt = ctx.dt
    if comp.dead or not (comp.has_slack or len(comp.gens) or len(comp.bats)):
        shed[loads] = d
        return
    ren = ctx.G[comp.gens, h] if len(comp.gens) else np.zeros(0)
    if comp.has_slack:
        if comp.safe or _within_capacity(comp, d, ren):
            for b in comp.bats:
                battery_dispatch(ctx.bat_spec[b], bats[b], -ctx.bat_spec[b].inverter_limit, dt)
            return
        caps = np.zeros(len(comp.bats))
    else:
        caps = np.array([_battery_capability(ctx, comp, b, bats[b], d, ren) for b in comp.bats])

    gen_node = np.concatenate([comp.gen_node, comp.bat_node] + ([[comp.slack_node]] if comp.has_slack else []))
    gmax = np.concatenate([ren, caps] + ([[SLACK_LIMIT]] if comp.has_slack else []))
    gmin = np.zeros(len(gmax))
    gcost = np.concatenate([np.zeros(len(ren)), np.full(len(caps), BATTERY_COST)]
                           + ([[SLACK_COST]] if comp.has_slack else []))
    if comp.has_slack:
        gmin[-1] = -SLACK_LIMIT
    prob = ShedProblem(len(comp.buses), comp.load_node, d, ctx.lp_cost[loads], gen_node.astype(int),
                       gmin, gmax, gcost, comp.line_from, comp.line_to, comp.capacity)
    sol = solve_shed(prob, check=False)
    if not sol.feasible:
        diag["infeasible"] += 1
    shed[loads] = sol.shed
    ng, nb = len(ren), len(caps)
    used_ren = sol.dispatch[:ng]
    out = sol.dispatch[ng:ng + nb]
    for k, b in enumerate(comp.bats):
        spec = ctx.bat_spec[b]
        if out[k] > 1e-12:
            battery_dispatch(spec, bats[b], float(out[k]), dt)
    if not comp.has_slack:
        surplus = float(ren.sum() - used_ren.sum())
        for k, b in enumerate(comp.bats):
            if surplus > 1e-12 and out[k] <= 1e-12:
                surplus += battery_dispatch(ctx.bat_spec[b], bats[b], -surplus, dt)
    else:
        for b in comp.bats:
            battery_dispatch(ctx.bat_spec[b], bats[b], -ctx.bat_spec[b].inverter_limit, dt)
    if ctx.config.run_load_flow and not comp.has_slack and len(comp.buses) > 1:
        _bookkeeping_flow(ctx, comp, h, sol, ren, caps, diag)


def _within_capacity(comp: _Component, d, ren) -> bool:
    from .shedding import tree_flows

    n = len(comp.buses)
    net_out = (np.bincount(comp.gen_node, weights=ren, minlength=n)
               - np.bincount(comp.load_node, weights=d, minlength=n))
    net_out[comp.slack_node] -= net_out.sum()
    flow = tree_flows(n, comp.line_from, comp.line_to, net_out)
    return bool((np.abs(flow) <= comp.capacity + 1e-9).all())


def _battery_capability(ctx: Context, comp: _Component, b: int, state: BatteryState, d, ren) -> float:
    """Discharge power the battery may offer in an island.

    Own microgrid load may draw the battery down to its minimum SoC; any
    export to distribution customers stops at the mode's reserve floor.
    """
    spec = ctx.bat_spec[b]
    full = max_discharge(spec, state.soc, ctx.dt, spec.min_energy)
    if not comp.ds_loads_present or not ctx.mode.supportive:
        return full
    own = max(0.0, float(d[comp.mg_loads].sum()) - float(ren.sum()))
    return min(full, own + max_discharge(spec, state.soc, ctx.dt, ctx.reserve_floor[b]))


def _bookkeeping_flow(ctx: Context, comp: _Component, h: int, sol, ren, caps, diag):
    net = ctx.net
    base = net.base_mva
    if len(comp.bats):
        slack_local = int(comp.bat_node[0])
    elif len(comp.gens):
        slack_local = int(comp.gen_node[int(np.argmax(ctx.rated[comp.gens]))])
    else:
        return
    tree = RadialTree.build(net, comp.bus_ids, comp.lines, comp.bus_ids[slack_local])
    pos = {b: k for k, b in enumerate(tree.buses)}
    p = [0.0] * len(tree.buses)
    q = [0.0] * len(tree.buses)
    loads = comp.loads
    dem = ctx.P[loads, h]
    frac = np.where(dem > 0, 1.0 - sol.shed / np.where(dem > 0, dem, 1.0), 0.0)
    for k, li in enumerate(loads):
        j = pos[comp.bus_ids[comp.load_node[k]]]
        p[j] += dem[k] * frac[k] / base
        q[j] += ctx.Q[li, h] * frac[k] / base
    nodes = np.concatenate([comp.gen_node, comp.bat_node])
    for k, node in enumerate(nodes):
        j = pos[comp.bus_ids[node]]
        p[j] -= sol.dispatch[k] / base
    fs = tree.solve(p, q)
    diag["load_flows"] += 1
    if not fs.converged:
        diag["load_flow_failures"] += 1
    else:
        diag["min_voltage"] = min(diag["min_voltage"], fs.min_voltage)


# --------------------------------------------------------------------------
# simulation


@dataclass
class ResultSet:
    config: ScenarioConfig
    networks: list[str]
    results: list[IterationResult]

    @property
    def master_seed(self) -> int:
        return self.config.master_seed

    def __len__(self):
        return len(self.results)

    def values(self, network: str, index: str = "ENS") -> np.ndarray:
        return np.array([r.reports[network].to_dict()[index] for r in self.results])

    def rows(self) -> list[dict]:
        out = []
        for r in self.results:
            for n in self.networks:
                rep = r.reports[n]
                out.append({"iteration": r.iteration, "network": n, "ENS_MWh": rep.ENS, "CENS": rep.CENS,
                            "SAIFI": rep.SAIFI, "SAIDI_h": rep.SAIDI, "CAIDI_h": rep.CAIDI})
        return out

    def running_mean(self, network: str, index: str = "ENS") -> np.ndarray:
        v = self.values(network, index)
        return np.cumsum(v) / np.arange(1, len(v) + 1) if len(v) else v

    def summary(self) -> dict:
        out = {"master_seed": self.master_seed, "iterations": len(self.results),
               "microgrid_mode": self.config.microgrid_mode, "networks": {}}
        for n in self.networks:
            stats = {}
            for idx in ("ENS", "CENS", "SAIFI", "SAIDI", "CAIDI", "lambda_s", "U_s", "r_s"):
                v = self.values(n, idx)
                stats[idx] = {"mean": float(v.mean()) if len(v) else 0.0,
                              "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0}
            stats["convergence_trace"] = [float(x) for x in self.running_mean(n)]
            out["networks"][n] = stats
        return out


_WORKER_CTX: Context | None = None


def _init_worker(config_dict):
    global _WORKER_CTX
    _WORKER_CTX = prepare(ScenarioConfig.from_dict(config_dict))


def _run_chunk(indices):
    return [run_iteration(_WORKER_CTX, i) for i in indices]


def run_simulation(config: ScenarioConfig, workers: int | None = None, progress=None) -> ResultSet:
    """All iterations of ``config``; the output does not depend on ``workers``."""
    workers = config.workers if workers is None else workers
    if workers < 1:
        raise ConfigError("workers", "must be >= 1")
    ctx = prepare(config)
    n = config.iterations
    results: list[IterationResult] = []
    if workers == 1 or n < 2:
        for i in range(n):
            results.append(run_iteration(ctx, i))
            if progress is not None:
                progress(i + 1, n)
    else:
        size = max(1, min(250, n // (workers * 4) or 1))
        chunks = [list(range(a, min(n, a + size))) for a in range(0, n, size)]
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(config.to_dict(),)) as pool:
            for part in pool.map(_run_chunk, chunks):
                results.extend(part)
                if progress is not None:
                    progress(len(results), n)
    results.sort(key=lambda r: r.iteration)
    return ResultSet(config, list(ctx.networks), results)


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1))
