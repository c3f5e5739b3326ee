"""Microgrid controller: fault handling for the microgrid circuit breaker."""
from __future__ import annotations

from dataclasses import dataclass

from .network import DISTRIBUTION, RadialNetwork, find_sub_systems
from .stochastic import BatterySpec

MODES = ("no_support", "full_support", "limited_support")


@dataclass(frozen=True)
class ControllerMode:
    mode: str = "no_support"
    reserve_hours: float = 4.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown microgrid mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.mode == "limited_support" and not self.reserve_hours > 0:
            raise ValueError("reserve_hours must be positive in limited_support mode")

    @property
    def supportive(self) -> bool:
        return self.mode != "no_support"


@dataclass(frozen=True)
class ControllerState:
    breaker_state: str = "closed"
    sectioning_remaining: float = 0.0
    islanded_with: frozenset = frozenset()

    @property
    def closed(self) -> bool:
        return self.breaker_state == "closed"


def _ds_lines(net: RadialNetwork) -> frozenset[str]:
    cache = net.__dict__.setdefault("_ds_line_cache", None)
    if cache is None:
        ds = set(net.networks.get(DISTRIBUTION, ()))
        cache = frozenset(ln.id for ln in net.lines if ln.from_bus in ds and ln.to_bus in ds)
        net.__dict__["_ds_line_cache"] = cache
    return cache


def islanded_distribution_buses(net: RadialNetwork, failed_lines) -> frozenset[str]:
    """Distribution buses sharing an island with the microgrid when its breaker is closed."""
    bus = net.microgrid_connection_bus
    if bus is None:
        return frozenset()
    key = frozenset(failed_lines)
    cache = net.__dict__.setdefault("_islanded_cache", {})
    if key not in cache:
        if len(cache) > 4096:
            cache.clear()
        cache[key] = frozenset()
        for sub in find_sub_systems(net, key):
            if bus in sub.buses and not sub.has_slack:
                cache[key] = frozenset(b for b in sub.buses if net.network_of.get(b) == DISTRIBUTION)
    return cache[key]


def controller_step(mode: ControllerMode, state: ControllerState, net: RadialNetwork, failed_lines,
                    dt: float, new_outage: bool = False, sectioning_time: float | None = None) -> ControllerState:
    """Advance the controller by one increment.

    The breaker opens on every new outage and stays open for the sectioning
    time. Afterwards it recloses unless its own line is failed; in
    ``no_support`` mode it additionally waits until no distribution line is
    failed. The check repeats on every call, so recovery of a line is
    picked up on the next increment.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    failed = set(failed_lines)
    sec = max(0.0, state.sectioning_remaining - dt)
    breaker = state.breaker_state
    if new_outage:
        breaker = "open"
        if sectioning_time is None:
            conn = net.microgrid_connection_line
            sectioning_time = net.sectioning_time_for(conn) if conn else 0.0
        sec = max(sec, sectioning_time)

    if breaker == "open" and sec <= 0:
        conn = net.microgrid_connection_line
        if conn is not None and conn not in failed:
            if mode.supportive or not (failed & _ds_lines(net)):
                breaker = "closed"

    islanded = frozenset()
    if breaker == "closed" and mode.supportive and failed:
        islanded = islanded_distribution_buses(net, failed)
    return ControllerState(breaker, sec, islanded)


def support_budget(mode: ControllerMode, battery: BatterySpec, peak_microgrid_load: float) -> float:
    """Lowest stored energy (MWh) the battery may reach while exporting to the
    distribution system.

    In ``no_support`` mode the battery never exports; the returned floor is
    its own minimum SoC, which is what islanded self-supply may use.
    """
    floor = battery.min_energy
    if mode.mode == "limited_support":
        floor = min(battery.capacity, floor + mode.reserve_hours * peak_microgrid_load)
    return floor
