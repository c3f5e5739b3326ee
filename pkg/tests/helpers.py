"""Small networks and independent oracles shared by the test modules."""
from __future__ import annotations

import cmath
from collections import deque
from pathlib import Path

import numpy as np

from gridrel.datasets import save_network
from gridrel.network import (DISTRIBUTION, MICROGRID, Battery, Bus, GenerationUnit, Line, Load,
                             RadialNetwork, Switchgear)
from gridrel.stochastic import BatterySpec, FixedDuration


def chain_network(n_buses=3, rates=None, repair_hours=4.0, load_mw=1.0, load_bus=None,
                  sectioning=1.0, customers=1) -> RadialNetwork:
    """Feeder B1-B2-...-Bn with a breaker on L1 and one load at the last bus.

    ``rates`` gives the failure rate per year of each line (lines are 1 km).
    """
    rates = rates if rates is not None else [0.0] * (n_buses - 2) + [2.0]
    load_bus = load_bus or f"B{n_buses}"
    buses = tuple(Bus(f"B{k}", (float(k), 0.0), "P1" if f"B{k}" == load_bus else None, None,
                      customers if f"B{k}" == load_bus else 0, "household")
                  for k in range(1, n_buses + 1))
    lines = tuple(Line(f"L{k}", f"B{k}", f"B{k + 1}", 0.01, 0.01, 1.0, 10.0, float(rates[k - 1]),
                       FixedDuration(repair_hours)) for k in range(1, n_buses))
    sw = (Switchgear("CB1", "circuit_breaker", "L1", "from", "closed", sectioning),)
    loads = (Load("P1", load_bus, load_mw, 0.0, load_mw, 1.0),)
    return RadialNetwork(buses, lines, sw, {DISTRIBUTION: tuple(b.id for b in buses)}, "B1", loads)


def toy_microgrid_network(rate=0.0) -> RadialNetwork:
    """B1-B2-B3 feeder, microgrid M1 (wind + battery) and M2 (load) behind L3."""
    buses = (Bus("B1"), Bus("B2", (1.0, 0.0), "P2", None, 10, "household"),
             Bus("B3", (2.0, 0.0), "P3", None, 10, "household"),
             Bus("M1", (3.0, 0.0), None, "G1"), Bus("M2", (4.0, 0.0), "PM", None, 5, "household"))
    rep = FixedDuration(4.0)
    lines = (Line("L1", "B1", "B2", 0.01, 0.01, 1.0, 10.0, rate, rep),
             Line("L2", "B2", "B3", 0.01, 0.01, 1.0, 10.0, rate, rep),
             Line("L3", "B3", "M1", 0.01, 0.01, 1.0, 5.0, rate, rep),
             Line("L4", "M1", "M2", 0.01, 0.01, 1.0, 5.0, rate, rep))
    sw = (Switchgear("CB1", "circuit_breaker", "L1", "from", "closed", 1.0),
          Switchgear("CBM", "circuit_breaker", "L3", "from", "closed", 1.0))
    loads = (Load("P2", "B2", 0.2, 0.0, 0.2, 1.0), Load("P3", "B3", 0.2, 0.0, 0.2, 1.0),
             Load("PM", "M2", 0.1, 0.0, 0.1, 1.0))
    gens = (GenerationUnit("G1", "M1", "wind", 0.3),)
    bats = (Battery("BAT1", "M1", BatterySpec()),)
    return RadialNetwork(buses, lines, sw, {DISTRIBUTION: ("B1", "B2", "B3"), MICROGRID: ("M1", "M2")},
                         "B1", loads, gens, bats)


def write_flat_weather(path: Path, hours=8760, wind=0.0, irradiance=0.0, load_scale=1.0) -> Path:
    with open(path, "w") as fh:
        fh.write("hour,wind_speed_ms,irradiance,load_scale\n")
        for h in range(hours):
            fh.write(f"{h},{wind},{irradiance},{load_scale}\n")
    return path


def saved(net: RadialNetwork, tmp_path: Path, name="net.json") -> str:
    path = tmp_path / name
    save_network(net, path)
    return str(path)


# --------------------------------------------------------------------------
# oracles


def bfs_components(bus_ids, edges):
    """Connected components by breadth-first search over an edge list."""
    adj = {b: [] for b in bus_ids}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen, comps = set(), []
    for s in bus_ids:
        if s in seen:
            continue
        comp, queue = {s}, deque([s])
        seen.add(s)
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    comp.add(v)
                    queue.append(v)
        comps.append(frozenset(comp))
    return comps


def slack_paths(net: RadialNetwork) -> dict[str, list[str]]:
    """Line ids on the path from the slack bus to every bus, by depth-first enumeration."""
    adj = {b.id: [] for b in net.buses}
    for ln in net.lines:
        adj[ln.from_bus].append((ln.to_bus, ln.id))
        adj[ln.to_bus].append((ln.from_bus, ln.id))
    paths = {net.slack_bus: []}
    stack = [net.slack_bus]
    while stack:
        u = stack.pop()
        for v, lid in adj[u]:
            if v not in paths:
                paths[v] = paths[u] + [lid]
                stack.append(v)
    return paths


def complex_bfs(net: RadialNetwork, p, q, v0=1.0, tol=1e-12, max_iter=200):
    """Backward/forward sweep on complex branch currents.

    ``p``/``q`` map bus id to per-unit consumption. Returns |V| per bus.
    """
    parent, order = {}, [net.slack_bus]
    paths = slack_paths(net)
    by_id = {ln.id: ln for ln in net.lines}
    for b in sorted(paths, key=lambda b: len(paths[b])):
        if b == net.slack_bus:
            continue
        ln = by_id[paths[b][-1]]
        parent[b] = (ln.from_bus if ln.to_bus == b else ln.to_bus, complex(ln.resistance, ln.reactance))
        order.append(b)
    V = {b: complex(v0, 0.0) for b in order}
    for _ in range(max_iter):
        current = {b: (complex(p.get(b, 0.0), q.get(b, 0.0)) / V[b]).conjugate() for b in order}
        for b in reversed(order[1:]):
            current[parent[b][0]] += current[b]
        new = {net.slack_bus: complex(v0, 0.0)}
        for b in order[1:]:
            up, z = parent[b]
            new[b] = new[up] - z * current[b]
        delta = max(abs(new[b] - V[b]) for b in order)
        V = new
        if delta < tol:
            break
    return {b: abs(v) for b, v in V.items()}, {b: cmath.phase(v) for b, v in V.items()}


def brute_force_shed(p, step=0.001):
    """Enumerate shed levels of every load on a ``step`` MW grid.

    Supports at most one generator. With the generator fixed at one node the
    tree flows are linear in the served demand, so a shed vector is feasible
    iff the aggregate balance fits the generator range and every flow fits its
    capacity. Returns ``(best cost, array of all feasible costs)``.
    """
    assert len(p.gen_node) <= 1
    axes = [np.round(np.arange(0.0, d + step / 2, step), 9) if d > 0 else np.zeros(1) for d in p.demand]
    mesh = np.meshgrid(*axes, indexing="ij")
    shed = np.stack([m.ravel() for m in mesh], axis=1)
    served = p.demand[None, :] - shed
    need = served.sum(axis=1)
    gmin = float(p.gen_min.sum()) if len(p.gen_node) else 0.0
    gmax = float(p.gen_max.sum()) if len(p.gen_node) else 0.0
    ok = (need >= gmin - 1e-9) & (need <= gmax + 1e-9)
    if len(p.line_from):
        root = int(p.gen_node[0]) if len(p.gen_node) else 0
        F = np.zeros((len(p.line_from), len(p.demand)))
        for i, node in enumerate(p.load_node):
            net_out = np.zeros(p.n_nodes)
            net_out[node] -= 1.0
            net_out[root] += 1.0
            F[:, i] = _flows_with_root(p, net_out, root)
        flows = served @ F.T
        ok &= (np.abs(flows) <= p.capacity[None, :] + 1e-9).all(axis=1)
    costs = shed[ok] @ p.cost
    return (float(costs.min()) if len(costs) else None), costs


def _flows_with_root(p, net_out, root):
    """Line flows (positive from ``line_from`` to ``line_to``) for a balanced injection."""
    n = p.n_nodes
    adj = {k: [] for k in range(n)}
    for l, (a, b) in enumerate(zip(p.line_from, p.line_to)):
        adj[a].append((b, l, 1.0))
        adj[b].append((a, l, -1.0))
    order, par = [root], {root: None}
    for u in order:
        for v, l, sgn in adj[u]:
            if v not in par:
                par[v] = (u, l, sgn)
                order.append(v)
    acc = np.asarray(net_out, dtype=float).copy()
    flows = np.zeros(len(p.line_from))
    for v in reversed(order[1:]):
        u, l, sgn = par[v]
        # the subtree under v exports acc[v]; a deficit is fed from u
        flows[l] = -acc[v] * sgn
        acc[u] += acc[v]
    return flows
