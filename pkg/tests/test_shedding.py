import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridrel.shedding import MalformedProblem, ShedProblem, solve_shed, tree_flows
from helpers import brute_force_shed


def test_ample_generation_no_shed():
    p = ShedProblem(2, [0, 1], [0.3, 0.2], [5.0, 5.0], [0], [0.0], [1.0], line_from=[0], line_to=[1], capacity=[1.0])
    for method in ("auto", "lp"):
        sol = solve_shed(p, method)
        assert sol.feasible and sol.total_shed == pytest.approx(0.0, abs=1e-12) and sol.objective == 0


def test_cheap_load_shed_first():
    p = ShedProblem(1, [0, 0], [0.5, 0.3], [10.0, 5.0], [0], [0.0], [0.5])
    for method in ("auto", "lp"):
        sol = solve_shed(p, method)
        assert np.allclose(sol.shed, [0.0, 0.3], atol=1e-9)
        assert sol.objective == pytest.approx(1.5)
    best, _ = brute_force_shed(p)
    assert best == pytest.approx(1.5)


def test_line_capacity_forces_downstream_shed():
    # source at node 0, 0.1 MW load at node 1, 0.6 MW load at node 2 behind a 0.4 MW line
    p = ShedProblem(3, [1, 2], [0.1, 0.6], [1.0, 1.0], [0], [0.0], [5.0], line_from=[0, 1], line_to=[1, 2],
                    capacity=[5.0, 0.4])
    for method in ("auto", "lp"):
        sol = solve_shed(p, method)
        assert np.allclose(sol.shed, [0.0, 0.2], atol=1e-9)
        assert np.allclose(sol.flow, [0.5, 0.4], atol=1e-9)
    best, _ = brute_force_shed(p)
    assert best == pytest.approx(0.2)


def test_zero_demand_zero_everything():
    p = ShedProblem(2, [0, 1], [0.0, 0.0], [1.0, 2.0], [0], [0.0], [1.0], line_from=[0], line_to=[1], capacity=[1.0])
    sol = solve_shed(p)
    assert not sol.shed.any() and not sol.dispatch.any() and not sol.flow.any() and sol.objective == 0


def test_infeasible_minimum_generation():
    p = ShedProblem(1, [0], [0.2], [1.0], [0], [0.5], [1.0])
    for method in ("auto", "lp"):
        sol = solve_shed(p, method)
        assert not sol.feasible and sol.shed[0] == 0.2


def test_equal_costs_tie_break_is_deterministic():
    p = ShedProblem(1, [0, 0, 0], [0.2, 0.2, 0.2], [1.0, 1.0, 1.0], [0], [0.0], [0.3])
    a, b = solve_shed(p, "auto"), solve_shed(p, "lp")
    assert np.allclose(a.shed, [0.2, 0.1, 0.0])
    # the simplex may settle on another vertex of the tie, at the same cost
    assert b.objective == pytest.approx(a.objective) and b.total_shed == pytest.approx(0.3)


@pytest.mark.parametrize("kw, msg", [
    (dict(n_nodes=2, load_node=[0], demand=[0.1], cost=[1.0]), "lines"),
    (dict(n_nodes=1, load_node=[3], demand=[0.1], cost=[1.0]), "out of range"),
    (dict(n_nodes=1, load_node=[0], demand=[-0.1], cost=[1.0]), "nonnegative"),
    (dict(n_nodes=1, load_node=[0, 0], demand=[0.1], cost=[1.0]), "length"),
    (dict(n_nodes=3, load_node=[0], demand=[0.1], cost=[1.0], line_from=[0, 1], line_to=[1, 0],
          capacity=[1, 1]), "cycle"),
])
def test_malformed_problems(kw, msg):
    with pytest.raises(MalformedProblem, match=msg):
        solve_shed(ShedProblem(**kw))


def test_tree_flows():
    # node 2 exports 0.2 towards node 1, which draws the remaining 0.3 from node 0
    flow = tree_flows(3, np.array([0, 2]), np.array([1, 1]), np.array([0.0, -0.5, 0.2]))
    assert np.allclose(flow, [0.3, 0.2])


@st.composite
def small_problem(draw):
    n = draw(st.integers(1, 4))
    lf, lt = [], []
    for v in range(1, n):
        u = draw(st.integers(0, v - 1))
        if draw(st.booleans()):
            lf.append(u), lt.append(v)
        else:
            lf.append(v), lt.append(u)
    nl = draw(st.integers(1, 3))
    top = 40 if nl == 3 else 120
    demand = np.array([draw(st.integers(0, top)) for _ in range(nl)]) / 1000
    return ShedProblem(
        n, [draw(st.integers(0, n - 1)) for _ in range(nl)], demand,
        [float(draw(st.integers(1, 30))) for _ in range(nl)],
        [draw(st.integers(0, n - 1))], [0.0], [draw(st.integers(0, 150)) / 1000],
        line_from=lf, line_to=lt, capacity=[draw(st.integers(0, 120)) / 1000 for _ in range(n - 1)])


@settings(max_examples=60, deadline=None)
@given(small_problem())
def test_optimum_below_every_grid_point(p):
    best, costs = brute_force_shed(p)
    for method in ("auto", "lp"):
        sol = solve_shed(p, method)
        assert sol.feasible
        assert sol.objective <= costs.min() + 1e-7
        assert sol.objective == pytest.approx(best, abs=1e-3 * p.cost.max())
        served = p.demand - sol.shed
        assert (sol.shed >= -1e-12).all() and (served >= -1e-9).all()
        assert (np.abs(sol.flow) <= p.capacity + 1e-7).all()


@settings(max_examples=40, deadline=None)
@given(small_problem(), st.floats(0.1, 100))
def test_cost_scaling(p, c):
    base = solve_shed(p)
    scaled = ShedProblem(p.n_nodes, p.load_node, p.demand, p.cost * c, p.gen_node, p.gen_min, p.gen_max,
                         None, p.line_from, p.line_to, p.capacity)
    sol = solve_shed(scaled)
    assert sol.objective == pytest.approx(c * base.objective, rel=1e-7, abs=1e-9)
    # the unscaled optimum is still optimal after scaling
    assert float(scaled.cost @ base.shed) == pytest.approx(sol.objective, rel=1e-7, abs=1e-9)


def test_several_generators_auto_matches_lp():
    rng = np.random.default_rng(8)
    for _ in range(50):
        n = 5
        lf = [int(rng.integers(0, v)) for v in range(1, n)]
        p = ShedProblem(n, rng.integers(0, n, 4), rng.uniform(0, 0.5, 4), rng.uniform(1, 10, 4),
                        rng.integers(0, n, 3), np.zeros(3), rng.uniform(0, 0.6, 3), rng.uniform(0, 0.01, 3),
                        lf, list(range(1, n)), rng.uniform(0.05, 0.8, n - 1))
        a, b = solve_shed(p, "auto"), solve_shed(p, "lp")
        assert a.objective == pytest.approx(b.objective, rel=1e-6, abs=1e-9)
