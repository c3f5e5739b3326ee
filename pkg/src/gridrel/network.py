"""Static power-system model: buses, lines, switchgear and sub-system partitioning."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property

from .stochastic import BatterySpec, FixedDuration, GammaSpec

CATEGORIES = ("household", "farm", "industry", "trade", "office")
DISTRIBUTION = "distribution_system"
MICROGRID = "microgrid"


@dataclass(frozen=True)
class Bus:
    id: str
    coordinates: tuple[float, float] = (0.0, 0.0)
    load_ref: str | None = None
    generation_ref: str | None = None
    customer_count: int = 0
    customer_category: str = "household"


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    resistance: float
    reactance: float
    length: float
    capacity: float
    failure_rate_per_km: float
    repair_time_dist: GammaSpec | FixedDuration

    @property
    def failure_rate(self) -> float:
        """Failures per year for the whole line."""
        return self.failure_rate_per_km * self.length


@dataclass(frozen=True)
class Switchgear:
    id: str
    kind: str  # "disconnector" | "circuit_breaker"
    host_line: str
    end: str = "from"
    state: str = "closed"
    sectioning_time: float | None = None


@dataclass(frozen=True)
class Load:
    """Demand at a bus. ``p_mw``/``q_mvar`` are nominal (canonical) values;
    ``peak_mw`` scales the synthetic hourly profile."""

    id: str
    bus: str
    p_mw: float
    q_mvar: float
    peak_mw: float
    power_factor: float = 0.95


@dataclass(frozen=True)
class GenerationUnit:
    id: str
    bus: str
    kind: str  # "wind" | "solar"
    rated_mw: float


@dataclass(frozen=True)
class Battery:
    id: str
    bus: str
    spec: BatterySpec


@dataclass(frozen=True)
class SubSystem:
    """A connected component after removing failed lines and open switchgear."""

    buses: tuple[str, ...]
    lines: tuple[str, ...]
    has_slack: bool
    has_generation: bool
    has_battery: bool


@dataclass(frozen=True)
class Issue:
    code: str
    message: str
    ids: tuple[str, ...] = ()


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __len__(self):
        return len(self.issues)

    def __iter__(self):
        return iter(self.issues)

    def codes(self) -> set[str]:
        return {i.code for i in self.issues}

    def add(self, code, message, *ids):
        self.issues.append(Issue(code, message, tuple(ids)))

    def __str__(self):
        if self.ok:
            return "valid"
        return "\n".join(f"{i.code}: {i.message}" for i in self.issues)


@dataclass(frozen=True)
class RadialNetwork:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    switchgear: tuple[Switchgear, ...]
    networks: dict[str, tuple[str, ...]]
    slack_bus: str
    loads: tuple[Load, ...] = ()
    generators: tuple[GenerationUnit, ...] = ()
    batteries: tuple[Battery, ...] = ()
    base_mva: float = 10.0
    base_kv: float = 12.66
    meta: dict = field(default_factory=dict, compare=False)

    # -- lookups ---------------------------------------------------------

    @cached_property
    def bus_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def line_index(self) -> dict[str, int]:
        return {ln.id: i for i, ln in enumerate(self.lines)}

    @cached_property
    def bus_by_id(self) -> dict[str, Bus]:
        return {b.id: b for b in self.buses}

    @cached_property
    def line_by_id(self) -> dict[str, Line]:
        return {ln.id: ln for ln in self.lines}

    @cached_property
    def load_at(self) -> dict[str, Load]:
        return {ld.bus: ld for ld in self.loads}

    @cached_property
    def network_of(self) -> dict[str, str]:
        out = {}
        for name, members in self.networks.items():
            for b in members:
                out[b] = name
        return out

    @cached_property
    def adjacency(self) -> dict[str, list[tuple[str, str]]]:
        adj = {b.id: [] for b in self.buses}
        for ln in self.lines:
            if ln.from_bus in adj and ln.to_bus in adj:
                adj[ln.from_bus].append((ln.id, ln.to_bus))
                adj[ln.to_bus].append((ln.id, ln.from_bus))
        return adj

    @cached_property
    def breakers(self) -> tuple[Switchgear, ...]:
        return tuple(sw for sw in self.switchgear if sw.kind == "circuit_breaker")

    @cached_property
    def breaker_on_line(self) -> dict[str, str]:
        return {sw.host_line: sw.id for sw in self.breakers}

    # -- radial structure rooted at the slack bus -------------------------

    @cached_property
    def _tree(self):
        parent_line, parent_bus, order = {}, {}, []
        if self.slack_bus not in self.adjacency:
            return parent_line, parent_bus, order
        seen = {self.slack_bus}
        queue = deque([self.slack_bus])
        while queue:
            b = queue.popleft()
            order.append(b)
            for lid, nb in self.adjacency[b]:
                if nb not in seen:
                    seen.add(nb)
                    parent_line[nb] = lid
                    parent_bus[nb] = b
                    queue.append(nb)
        return parent_line, parent_bus, order

    @property
    def parent_line(self) -> dict[str, str]:
        return self._tree[0]

    @property
    def parent_bus(self) -> dict[str, str]:
        return self._tree[1]

    @property
    def bfs_order(self) -> list[str]:
        return self._tree[2]

    @cached_property
    def downstream_bus_of_line(self) -> dict[str, str]:
        return {lid: b for b, lid in self.parent_line.items()}

    @cached_property
    def _subtrees(self) -> dict[str, frozenset[str]]:
        sub = {b: {b} for b in self.bfs_order}
        for b in reversed(self.bfs_order):
            p = self.parent_bus.get(b)
            if p is not None:
                sub[p] |= sub[b]
        return {b: frozenset(s) for b, s in sub.items()}

    @cached_property
    def protecting_breaker(self) -> dict[str, str | None]:
        """For each line, the first circuit breaker met walking from the line
        toward the slack (the line's own breaker if it carries one)."""
        out = {}
        for ln in self.lines:
            lid = ln.id
            brk = None
            while lid is not None:
                if lid in self.breaker_on_line:
                    brk = self.breaker_on_line[lid]
                    break
                up = self.parent_bus.get(self.downstream_bus_of_line.get(lid, ""), None)
                lid = self.parent_line.get(up) if up is not None else None
            out[ln.id] = brk
        return out

    @cached_property
    def microgrid_connection_line(self) -> str | None:
        ds = set(self.networks.get(DISTRIBUTION, ()))
        mg = set(self.networks.get(MICROGRID, ()))
        for ln in self.lines:
            if (ln.from_bus in ds and ln.to_bus in mg) or (ln.from_bus in mg and ln.to_bus in ds):
                return ln.id
        return None

    @cached_property
    def microgrid_breaker(self) -> str | None:
        lid = self.microgrid_connection_line
        return self.breaker_on_line.get(lid) if lid else None

    @cached_property
    def microgrid_connection_bus(self) -> str | None:
        lid = self.microgrid_connection_line
        if lid is None:
            return None
        ln = self.line_by_id[lid]
        return ln.from_bus if self.network_of.get(ln.from_bus) == DISTRIBUTION else ln.to_bus

    def lines_in(self, network: str) -> list[str]:
        """Lines with both ends in ``network``, plus the connection line for the microgrid."""
        members = set(self.networks.get(network, ()))
        out = [ln.id for ln in self.lines if ln.from_bus in members and ln.to_bus in members]
        if network == MICROGRID and self.microgrid_connection_line:
            out.append(self.microgrid_connection_line)
        return out

    def sectioning_time_for(self, line_id: str) -> float:
        brk = self.protecting_breaker.get(line_id)
        if brk is None:
            return 0.0
        sw = next(s for s in self.breakers if s.id == brk)
        return float(sw.sectioning_time or 0.0)

    def downstream_of(self, line_id: str) -> set[str]:
        return downstream_of(self, line_id)


# --------------------------------------------------------------------------
# Operations


def validate(net: RadialNetwork) -> ValidationReport:
    """Check every structural invariant and report violations with component ids."""
    rep = ValidationReport()
    seen: set[str] = set()
    for b in net.buses:
        if b.id in seen:
            rep.add("duplicate_id", f"duplicate bus id {b.id}", b.id)
        seen.add(b.id)
        if b.customer_count < 0:
            rep.add("invalid_value", f"bus {b.id} has negative customer_count", b.id)
        if b.customer_category not in CATEGORIES:
            rep.add("invalid_value", f"bus {b.id} has unknown category {b.customer_category!r}", b.id)
    bus_ids = {b.id for b in net.buses}

    seen_lines: set[str] = set()
    for ln in net.lines:
        if ln.id in seen_lines:
            rep.add("duplicate_id", f"duplicate line id {ln.id}", ln.id)
        seen_lines.add(ln.id)
        for end in (ln.from_bus, ln.to_bus):
            if end not in bus_ids:
                rep.add("unknown_bus", f"line {ln.id} references unknown bus {end}", ln.id, end)
        if ln.from_bus == ln.to_bus:
            rep.add("self_loop", f"line {ln.id} connects bus {ln.from_bus} to itself", ln.id)
        if ln.resistance < 0 or ln.reactance < 0:
            rep.add("invalid_value", f"line {ln.id} has negative impedance", ln.id)
        if not ln.length > 0:
            rep.add("invalid_value", f"line {ln.id} has non-positive length", ln.id)
        if not ln.capacity > 0:
            rep.add("invalid_value", f"line {ln.id} has non-positive capacity", ln.id)
        if ln.failure_rate_per_km < 0:
            rep.add("invalid_value", f"line {ln.id} has negative failure rate", ln.id)

    seen_sw: set[str] = set()
    for sw in net.switchgear:
        if sw.id in seen_sw:
            rep.add("duplicate_id", f"duplicate switchgear id {sw.id}", sw.id)
        seen_sw.add(sw.id)
        if sw.host_line not in seen_lines:
            rep.add("unknown_line", f"switchgear {sw.id} references unknown line {sw.host_line}", sw.id)
        if sw.kind not in ("disconnector", "circuit_breaker"):
            rep.add("invalid_value", f"switchgear {sw.id} has unknown kind {sw.kind!r}", sw.id)
        if sw.end not in ("from", "to"):
            rep.add("invalid_value", f"switchgear {sw.id} must sit at the 'from' or 'to' end", sw.id)
        if sw.kind == "circuit_breaker" and not (sw.sectioning_time or 0) > 0:
            rep.add("invalid_value", f"breaker {sw.id} needs a positive sectioning_time", sw.id)
    for lid, n in _count(sw.host_line for sw in net.breakers).items():
        if n > 1:
            rep.add("invalid_value", f"line {lid} carries {n} circuit breakers", lid)

    if net.slack_bus not in bus_ids:
        rep.add("missing_slack", f"slack bus {net.slack_bus!r} is not a bus", net.slack_bus)
        return rep

    # tree check on the full graph (all switchgear closed, all lines healthy)
    good = [ln for ln in net.lines if ln.from_bus in bus_ids and ln.to_bus in bus_ids and ln.from_bus != ln.to_bus]
    parent = {b: b for b in bus_ids}

    def root(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for ln in good:
        a, b = root(ln.from_bus), root(ln.to_bus)
        if a == b:
            rep.add("cycle", f"cycle detected: line {ln.id} closes a loop", ln.id)
        else:
            parent[a] = b
    reach = set(net.bfs_order)
    for b in net.buses:
        if b.id not in reach:
            rep.add("disconnected", f"bus disconnected: {b.id} has no path to the slack bus", b.id)

    # network partition
    members = [b for group in net.networks.values() for b in group]
    for b, n in _count(members).items():
        if n > 1:
            rep.add("partition", f"bus {b} belongs to more than one network", b)
        if b not in bus_ids:
            rep.add("unknown_bus", f"network member {b} is not a bus", b)
    for b in bus_ids - set(members):
        rep.add("partition", f"bus {b} belongs to no network", b)
    if DISTRIBUTION not in net.networks:
        rep.add("partition", "no distribution_system network defined")
    elif net.slack_bus not in net.networks[DISTRIBUTION]:
        rep.add("partition", "slack bus must belong to the distribution system", net.slack_bus)

    mg = set(net.networks.get(MICROGRID, ()))
    if mg:
        ds = set(net.networks.get(DISTRIBUTION, ()))
        ties = [ln for ln in net.lines if {ln.from_bus, ln.to_bus} & mg and {ln.from_bus, ln.to_bus} & ds]
        if len(ties) != 1:
            rep.add("microgrid", f"microgrid must be joined by exactly one line, found {len(ties)}",
                    *[t.id for t in ties])
        elif ties[0].id not in net.breaker_on_line:
            rep.add("microgrid", f"microgrid connection line {ties[0].id} carries no circuit breaker", ties[0].id)
        inner = [ln for ln in net.lines if ln.from_bus in mg and ln.to_bus in mg]
        comps = _components(mg, inner)
        if len(comps) > 1:
            rep.add("microgrid", "microgrid buses are not connected", *sorted(mg))

    for ld in net.loads:
        if ld.bus not in bus_ids:
            rep.add("unknown_bus", f"load {ld.id} at unknown bus {ld.bus}", ld.id)
        if ld.p_mw < 0 or ld.peak_mw < 0:
            rep.add("invalid_value", f"load {ld.id} has negative demand", ld.id)
    for b, n in _count(ld.bus for ld in net.loads).items():
        if n > 1:
            rep.add("invalid_value", f"bus {b} has {n} loads", b)
    for b, n in _count(g.bus for g in net.generators).items():
        if n > 1:
            rep.add("invalid_value", f"bus {b} has {n} generation units", b)
    for g in net.generators:
        if g.bus not in bus_ids:
            rep.add("unknown_bus", f"generator {g.id} at unknown bus {g.bus}", g.id)
    for bt in net.batteries:
        if bt.bus not in bus_ids:
            rep.add("unknown_bus", f"battery {bt.id} at unknown bus {bt.bus}", bt.id)
    return rep


def _count(items):
    out: dict = {}
    for x in items:
        out[x] = out.get(x, 0) + 1
    return out


def _components(buses, lines):
    adj = {b: [] for b in buses}
    for ln in lines:
        adj[ln.from_bus].append(ln.to_bus)
        adj[ln.to_bus].append(ln.from_bus)
    seen, comps = set(), []
    for b in buses:
        if b in seen:
            continue
        comp, stack = [], [b]
        seen.add(b)
        while stack:
            x = stack.pop()
            comp.append(x)
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        comps.append(comp)
    return comps


def find_sub_systems(net: RadialNetwork, failed_lines=(), open_switchgear=()) -> list[SubSystem]:
    """Connected components after removing failed lines and lines isolated by
    open switchgear. Sub-systems are ordered by their first bus in network order."""
    sw_by_id = {sw.id: sw for sw in net.switchgear}
    removed = set(failed_lines)
    for sid in open_switchgear:
        removed.add(sw_by_id[sid].host_line)
    gen_buses = {g.bus for g in net.generators}
    bat_buses = {b.bus for b in net.batteries}
    idx = net.bus_index
    seen: set[str] = set()
    out = []
    for b in net.buses:
        if b.id in seen:
            continue
        comp, lines, stack = [b.id], [], [b.id]
        seen.add(b.id)
        while stack:
            x = stack.pop()
            for lid, y in net.adjacency[x]:
                if lid in removed:
                    continue
                if y not in seen:
                    seen.add(y)
                    comp.append(y)
                    lines.append(lid)
                    stack.append(y)
        comp.sort(key=idx.__getitem__)
        lines.sort(key=net.line_index.__getitem__)
        cs = set(comp)
        out.append(SubSystem(tuple(comp), tuple(lines), net.slack_bus in cs,
                             bool(cs & gen_buses), bool(cs & bat_buses)))
    return out


def downstream_of(net: RadialNetwork, line_id: str) -> set[str]:
    """Buses whose unique path to the slack bus traverses ``line_id``."""
    if line_id not in net.line_by_id:
        raise KeyError(f"unknown line {line_id!r}")
    b = net.downstream_bus_of_line.get(line_id)
    if b is None:
        return set()
    return set(net._subtrees[b])


def relocate_microgrid(net: RadialNetwork, bus: str) -> RadialNetwork:
    """Copy of ``net`` with the microgrid connection line moved to ``bus``."""
    lid = net.microgrid_connection_line
    if lid is None:
        raise ValueError("network has no microgrid connection line")
    if net.network_of.get(bus) != DISTRIBUTION:
        raise ValueError(f"{bus} is not a distribution-system bus")
    ln = net.line_by_id[lid]
    if net.network_of.get(ln.from_bus) == DISTRIBUTION:
        new = replace(ln, from_bus=bus)
    else:
        new = replace(ln, to_bus=bus)
    lines = tuple(new if x.id == lid else x for x in net.lines)
    return replace(net, lines=lines, meta=dict(net.meta, microgrid_location=bus))
