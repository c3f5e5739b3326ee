"""Forward-backward sweep load flow for radial (sub-)networks.

All quantities are per-unit. Line ``l`` connects an upstream bus ``j`` to a
downstream bus ``i``; ``P_l``/``Q_l`` are sending-end flows at ``j``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field


class NonRadialError(ValueError):
    pass


@dataclass
class FlowSolution:
    voltage: dict[str, float]
    angle: dict[str, float]
    p_line: dict[str, float]
    q_line: dict[str, float]
    p_loss: dict[str, float]
    q_loss: dict[str, float]
    converged: bool
    iterations: int
    slack_bus: str
    slack_p: float = 0.0
    slack_q: float = 0.0
    message: str = ""

    @property
    def min_voltage(self) -> float:
        return min(self.voltage.values())

    @property
    def total_p_loss(self) -> float:
        return sum(self.p_loss.values())


@dataclass
class RadialTree:
    """Sweep ordering of a radial sub-network rooted at its slack bus."""

    buses: list[str]            # BFS order, root first
    lines: list[str | None]     # line feeding buses[k] (None for the root)
    parent: list[int]           # index into buses, -1 for the root
    r: list[float]
    x: list[float]
    children: list[list[int]] = field(default_factory=list)

    @classmethod
    def build(cls, net, bus_ids, line_ids, slack: str) -> "RadialTree":
        bus_set = set(bus_ids)
        if slack not in bus_set:
            raise NonRadialError(f"slack bus {slack} not in sub-system")
        line_set = set(line_ids)
        if len(line_set) != len(bus_set) - 1:
            raise NonRadialError(f"sub-system has {len(bus_set)} buses and {len(line_set)} lines; not a tree")
        adj = {b: [] for b in bus_set}
        for lid in line_set:
            ln = net.line_by_id[lid]
            if ln.from_bus not in bus_set or ln.to_bus not in bus_set:
                raise NonRadialError(f"line {lid} leaves the sub-system")
            adj[ln.from_bus].append((lid, ln.to_bus))
            adj[ln.to_bus].append((lid, ln.from_bus))
        order, lines, parent, r, x = [slack], [None], [-1], [0.0], [0.0]
        pos = {slack: 0}
        k = 0
        while k < len(order):
            b = order[k]
            for lid, nb in sorted(adj[b]):
                if nb in pos:
                    if lid != lines[k]:
                        raise NonRadialError(f"cycle through line {lid}")
                    continue
                pos[nb] = len(order)
                order.append(nb)
                lines.append(lid)
                parent.append(k)
                ln = net.line_by_id[lid]
                r.append(ln.resistance)
                x.append(ln.reactance)
            k += 1
        if len(order) != len(bus_set):
            raise NonRadialError("sub-system is not connected")
        children = [[] for _ in order]
        for i, p in enumerate(parent):
            if p >= 0:
                children[p].append(i)
        return cls(order, lines, parent, r, x, children)

    def solve(self, p_load, q_load, slack_voltage=1.0, tol=1e-6, max_iter=100) -> FlowSolution:
        """Sweep until the largest per-bus voltage change drops below ``tol``.

        ``p_load``/``q_load`` are net consumption per bus in sweep order
        (negative for net generation).
        """
        n = len(self.buses)
        par, r, x = self.parent, self.r, self.x
        V = [slack_voltage] * n
        ang = [0.0] * n
        ps = [0.0] * n  # sending-end flow on the line feeding bus k
        qs = [0.0] * n
        pl = [0.0] * n
        ql = [0.0] * n
        converged, message, it = False, "", 0
        for it in range(1, max_iter + 1):
            # backward sweep: accumulate downstream load plus downstream losses
            acc_p = list(p_load)
            acc_q = list(q_load)
            for k in range(n - 1, 0, -1):
                pr, qr = acc_p[k], acc_q[k]
                s2 = (pr * pr + qr * qr) / (V[k] * V[k])
                pl[k] = r[k] * s2
                ql[k] = x[k] * s2
                ps[k] = pr + pl[k]
                qs[k] = qr + ql[k]
                j = par[k]
                acc_p[j] += ps[k]
                acc_q[j] += qs[k]
            # forward sweep
            delta = 0.0
            new_v = [slack_voltage] * n
            for k in range(1, n):
                j = par[k]
                vj = new_v[j]
                P, Q, R, X = ps[k], qs[k], r[k], x[k]
                t1 = 2.0 * (P * R + Q * X)
                t2 = (P * P + Q * Q) * (R * R + X * X) / (vj * vj)
                rad = vj * vj - t1 + t2
                # the angle-free recursion also has a spurious root past the nose point
                if rad < 0 or vj * vj <= 0.5 * t1:
                    message = f"voltage collapse at bus {self.buses[k]}"
                    break
                new_v[k] = math.sqrt(rad)
                ang[k] = ang[j] + math.atan2(-(P * X - Q * R) / vj, vj - (P * R + Q * X) / vj)
                delta = max(delta, abs(new_v[k] - V[k]))
            if message:
                break
            V = new_v
            if delta < tol:
                converged = True
                break
        if not converged and not message:
            message = f"no convergence in {max_iter} iterations"
        b = self.buses
        slack_p = p_load[0] + sum(ps[c] for c in self.children[0])
        slack_q = q_load[0] + sum(qs[c] for c in self.children[0])
        return FlowSolution(
            voltage=dict(zip(b, V)),
            angle=dict(zip(b, ang)),
            p_line={self.lines[k]: ps[k] for k in range(1, n)},
            q_line={self.lines[k]: qs[k] for k in range(1, n)},
            p_loss={self.lines[k]: pl[k] for k in range(1, n)},
            q_loss={self.lines[k]: ql[k] for k in range(1, n)},
            converged=converged, iterations=it, slack_bus=b[0],
            slack_p=slack_p, slack_q=slack_q, message=message,
        )


def solve_fbs(net, sub, injections: dict[str, tuple[float, float]], slack_bus: str | None = None,
              slack_voltage: float = 1.0, tol: float = 1e-6, max_iter: int = 100) -> FlowSolution:
    """Load flow on sub-system ``sub`` (a ``SubSystem`` or any object with
    ``buses`` and ``lines``).

    ``injections`` maps bus id to net per-unit consumption ``(P, Q)``; buses
    not listed have none. The slack defaults to the network slack bus when it
    is inside ``sub``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    slack = slack_bus or (net.slack_bus if net.slack_bus in sub.buses else None)
    if slack is None:
        raise NonRadialError("no slack bus given for an islanded sub-system")
    tree = RadialTree.build(net, sub.buses, sub.lines, slack)
    p = [injections.get(b, (0.0, 0.0))[0] for b in tree.buses]
    q = [injections.get(b, (0.0, 0.0))[1] for b in tree.buses]
    return tree.solve(p, q, slack_voltage, tol, max_iter)
