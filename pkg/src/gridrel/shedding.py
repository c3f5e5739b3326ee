"""Cost-minimal load shedding on a radial sub-system.

The linear program minimizes the cost-weighted shed power subject to
per-node active-power balance on a lossless tree, generator limits, shed
limits and line capacities::

    min  sum_n C_n s_n
    s.t. s_k + sum_{g at k} p_g - sum_{l leaving k} f_l + sum_{l entering k} f_l = d_k
         pmin_g <= p_g <= pmax_g
         0 <= s_n <= d_n
         -cap_l <= f_l <= cap_l
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

# Relative cost perturbation that makes equal-cost ties prefer shedding the
# lowest load index first.
TIE_BREAK = 1e-9


class MalformedProblem(ValueError):
    pass


@dataclass
class ShedProblem:
    """Loads and generators are attached to nodes ``0..n_nodes-1``."""

    n_nodes: int
    load_node: np.ndarray
    demand: np.ndarray
    cost: np.ndarray
    gen_node: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    gen_min: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gen_max: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # dispatch preference only; not part of the reported objective
    gen_cost: np.ndarray | None = None
    line_from: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    line_to: np.ndarray = field(default_factory=lambda: np.zeros(0, int))
    capacity: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.load_node = np.asarray(self.load_node, int)
        self.demand = np.asarray(self.demand, float)
        self.cost = np.asarray(self.cost, float)
        self.gen_node = np.asarray(self.gen_node, int)
        self.gen_min = np.asarray(self.gen_min, float)
        self.gen_max = np.asarray(self.gen_max, float)
        self.line_from = np.asarray(self.line_from, int)
        self.line_to = np.asarray(self.line_to, int)
        self.capacity = np.asarray(self.capacity, float)
        if self.gen_cost is not None:
            self.gen_cost = np.asarray(self.gen_cost, float)

    def check(self):
        n = self.n_nodes
        if not (len(self.load_node) == len(self.demand) == len(self.cost)):
            raise MalformedProblem("load arrays differ in length")
        if not (len(self.gen_node) == len(self.gen_min) == len(self.gen_max)):
            raise MalformedProblem("generator arrays differ in length")
        if self.gen_cost is not None and len(self.gen_cost) != len(self.gen_node):
            raise MalformedProblem("gen_cost length differs from generators")
        if not (len(self.line_from) == len(self.line_to) == len(self.capacity)):
            raise MalformedProblem("line arrays differ in length")
        for arr in (self.load_node, self.gen_node, self.line_from, self.line_to):
            if len(arr) and (arr.min() < 0 or arr.max() >= n):
                raise MalformedProblem("node index out of range")
        if (self.demand < 0).any() or not np.isfinite(self.demand).all():
            raise MalformedProblem("demands must be finite and nonnegative")
        if (self.gen_min > self.gen_max).any():
            raise MalformedProblem("generator minimum exceeds maximum")
        if (self.capacity < 0).any():
            raise MalformedProblem("line capacities must be nonnegative")
        if len(self.line_from) != max(n - 1, 0):
            raise MalformedProblem(f"{n} nodes need {n - 1} lines for a tree, got {len(self.line_from)}")
        parent = list(range(n))

        def root(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in zip(self.line_from, self.line_to):
            ra, rb = root(a), root(b)
            if ra == rb:
                raise MalformedProblem("line incidence contains a cycle")
            parent[ra] = rb


@dataclass
class ShedSolution:
    shed: np.ndarray
    dispatch: np.ndarray
    flow: np.ndarray
    objective: float
    feasible: bool

    @property
    def total_shed(self) -> float:
        return float(self.shed.sum())


def solve_shed(p: ShedProblem, method: str = "auto", check: bool = True) -> ShedSolution:
    """Exact optimum of the shedding problem.

    ``method="lp"`` always runs the HiGHS simplex. ``"auto"`` first solves
    the problem without line limits in merit order (a fractional knapsack on
    the single aggregate balance) and returns that solution when the
    resulting tree flows respect every capacity, since it is then optimal for
    the constrained problem as well; otherwise it falls back to the LP.
    """
    if method not in ("auto", "lp"):
        raise ValueError(f"unknown method {method!r}")
    if check:
        p.check()
    nl, ng, nf = len(p.demand), len(p.gen_node), len(p.line_from)
    if not p.demand.any() and (p.gen_min <= 0).all() and (p.gen_max >= 0).all():
        return ShedSolution(np.zeros(nl), np.zeros(ng), np.zeros(nf), 0.0, True)
    if method == "auto":
        sol = _merit_order(p)
        if sol is not None:
            return sol
    return _solve_lp(p)


def _perturbed_costs(p: ShedProblem) -> np.ndarray:
    nl = len(p.demand)
    scale = float(p.cost.max()) if nl else 1.0
    return p.cost + TIE_BREAK * max(scale, 1.0) * np.arange(nl)


def _infeasible(p: ShedProblem) -> ShedSolution:
    return ShedSolution(p.demand.copy(), np.zeros(len(p.gen_node)), np.zeros(len(p.line_from)),
                        float(p.cost @ p.demand), False)


def _merit_order(p: ShedProblem) -> ShedSolution | None:
    nl, ng = len(p.demand), len(p.gen_node)
    gen_cost = p.gen_cost if p.gen_cost is not None else np.zeros(ng)
    residual = float(p.demand.sum() - p.gen_min.sum())
    room = np.concatenate([p.demand, p.gen_max - p.gen_min])
    tol = 1e-9 * max(1.0, float(np.abs(room).sum()))
    if residual < -tol or residual > room.sum() + tol:
        # unbalanced even without line limits, so the full problem is infeasible too
        return _infeasible(p)
    cost = np.concatenate([_perturbed_costs(p), gen_cost])
    order = np.argsort(cost, kind="stable")
    take = np.zeros(nl + ng)
    filled = np.cumsum(room[order])
    before = filled - room[order]
    take[order] = np.clip(residual - before, 0.0, room[order])
    shed = take[:nl]
    dispatch = p.gen_min + take[nl:]
    net_out = (np.bincount(p.gen_node, weights=dispatch, minlength=p.n_nodes)
               + np.bincount(p.load_node, weights=shed - p.demand, minlength=p.n_nodes))
    flow = tree_flows(p.n_nodes, p.line_from, p.line_to, net_out)
    if (np.abs(flow) > p.capacity + 1e-9).any():
        return None
    return ShedSolution(shed, dispatch, flow, float(p.cost @ shed), True)


def tree_flows(n_nodes, line_from, line_to, net_out) -> np.ndarray:
    """Line flows (positive from ``line_from`` to ``line_to``) on a tree given
    each node's net outflow. Node 0 absorbs any imbalance."""
    adj = [[] for _ in range(n_nodes)]
    for k, (a, b) in enumerate(zip(line_from.tolist(), line_to.tolist())):
        adj[a].append((k, b))
        adj[b].append((k, a))
    order, via = [0], [-1] * n_nodes
    seen = [False] * n_nodes
    seen[0] = True
    for u in order:
        for k, v in adj[u]:
            if not seen[v]:
                seen[v] = True
                via[v] = k
                order.append(v)
    acc = np.asarray(net_out, dtype=float).tolist()
    flow = np.zeros(len(line_from))
    for v in reversed(order[1:]):
        k = via[v]
        a, b = int(line_from[k]), int(line_to[k])
        flow[k] = acc[v] if a == v else -acc[v]
        acc[a + b - v] += acc[v]
    return flow


def _solve_lp(p: ShedProblem) -> ShedSolution:
    nl, ng, nf = len(p.demand), len(p.gen_node), len(p.line_from)
    nv = nl + ng + nf
    A = np.zeros((p.n_nodes, nv))
    A[p.load_node, np.arange(nl)] = 1.0
    np.add.at(A, (p.gen_node, nl + np.arange(ng)), 1.0)
    A[p.line_from, nl + ng + np.arange(nf)] -= 1.0
    A[p.line_to, nl + ng + np.arange(nf)] += 1.0
    b = np.bincount(p.load_node, weights=p.demand, minlength=p.n_nodes)

    c = np.zeros(nv)
    c[:nl] = _perturbed_costs(p)
    if p.gen_cost is not None:
        c[nl:nl + ng] = p.gen_cost
    bounds = ([(0.0, d) for d in p.demand]
              + list(zip(p.gen_min, p.gen_max))
              + [(-cap, cap) for cap in p.capacity])
    res = linprog(c, A_eq=A, b_eq=b, bounds=bounds, method="highs")
    if res.status != 0:
        if res.status != 2:
            raise RuntimeError(f"load-shedding LP failed: {res.message}")
        return _infeasible(p)
    x = res.x
    shed = np.clip(x[:nl], 0.0, p.demand)
    return ShedSolution(shed, x[nl:nl + ng].copy(), x[nl + ng:].copy(), float(p.cost @ shed), True)
