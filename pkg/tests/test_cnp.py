import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_netlist, random_cnp_problem, random_netlist, small_layout
from slrplace.arch import FIELDS
from slrplace.clockmodel import check_constraints, clock_usage
from slrplace.cnp import (
    ClockCover,
    CnpInfeasible,
    PinCounter,
    build_problem,
    distance_cost,
    feasible_clock_routing,
    plan_clocks,
    sll_increase,
    sll_increase_matrix,
    solve_exhaustive,
    solve_mapping,
)


def test_distance_cost_examples():
    box = (0.0, 10.0, 0.0, 5.0)
    assert distance_cost(3.0, 2.0, box) == 0.0
    assert distance_cost(12.0, 2.0, box) == 2.0
    assert distance_cost(-1.0, 8.0, box) == 1.0 + 3.0


def test_sll_increase_example():
    lay = small_layout(width=20, height=16, cols=1, rows=2)
    nl = make_netlist(["LUTL"] * 3, [[0, 1], [0, 2]])
    x = np.array([1.0, 1.0, 1.0])
    y = np.array([1.0, 2.0, 12.0])
    # moving 0 into the upper SLR cuts net (0,2) and crosses net (0,1)
    assert sll_increase([0], (1.0, 12.0), x, y, nl, lay.topology) == 0
    assert sll_increase([1], (1.0, 12.0), x, y, nl, lay.topology) == 1
    assert sll_increase([2], (1.0, 1.0), x, y, nl, lay.topology) == -1
    assert sll_increase([2], (1.0, 1.0), x, y, nl, lay.topology, signed=False) == 1
    # same SLR: nothing is visited
    c = PinCounter()
    assert sll_increase([0], (3.0, 3.0), x, y, nl, lay.topology, counter=c) == 0
    assert c.visits == 0


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_sll_increase_matrix_matches_loop(seed):
    rng = np.random.default_rng(seed)
    lay = small_layout(width=20, height=16, cols=2, rows=2)
    nl = random_netlist(rng, 14, 12)
    x = rng.uniform(0, 20, 14)
    y = rng.uniform(0, 16, 14)
    t = lay.topology
    M = sll_increase_matrix(x, y, nl, t)
    centers = [((zx + 0.5) * t.slr_width, (zy + 0.5) * t.slr_height) for zy in range(2) for zx in range(2)]
    for i in range(14):
        for z, c in enumerate(centers):
            assert M[i, z] == sll_increase([i], c, x, y, nl, t)


def test_clock_cover_add_remove():
    cells = np.array([(0, 0, 0), (1, 0, 0), (2, 0, 0)])
    cov = ClockCover(cells, 1)
    u1 = cov.add((0,), 0)
    assert u1 is not None
    u2 = cov.add((0,), 2)  # the box now spans all three cells
    assert cov.count.tolist() == [1, 1, 1]
    assert cov.add((1,), 1) is None
    assert cov.count.tolist() == [1, 1, 1]
    cov.remove(u2)
    assert cov.count.tolist() == [1, 0, 0]
    assert cov.add((1,), 1) is not None


@settings(max_examples=150)
@given(st.integers(0, 100_000), st.integers(1, 8), st.integers(1, 4))
def test_branch_and_bound_matches_exhaustive(seed, V, R):
    prob = random_cnp_problem(np.random.default_rng(seed), V, R)
    ref = solve_exhaustive(prob)
    if ref is None:
        with pytest.raises(CnpInfeasible):
            solve_mapping(prob)
        return
    sol = solve_mapping(prob)
    assert sol.optimal and sol.gap == 0.0
    assert sol.objective == pytest.approx(ref.objective, abs=1e-9)
    load = np.zeros_like(prob.capacity)
    for v, r in enumerate(sol.assign):
        load[r] += prob.demand[v]
    assert np.all(load <= prob.capacity + 1e-9)
    assert feasible_clock_routing(sol.assign, prob)
    assert sol.lower_bound <= sol.objective + 1e-9


def test_oversized_item_is_infeasible():
    prob = random_cnp_problem(np.random.default_rng(0), 3, 2)
    prob.demand[0, 0] = 100.0
    with pytest.raises(CnpInfeasible) as exc:
        solve_mapping(prob)
    assert "items" in exc.value.certificate or "fields" in exc.value.certificate


def test_build_problem_clusters_by_clock_field_region():
    lay = small_layout(width=20, height=16)
    nl = make_netlist(["FF"] * 4 + ["LUTL"], [[0, 4], [2, 3]], clocks={0: [0, 1], 1: [2, 3]})
    x = np.array([1.0, 1.5, 1.0, 15.0, 3.0])
    y = np.array([1.0, 1.5, 1.0, 1.0, 1.0])
    prob = build_problem(x, y, nl, lay)
    groups = sorted(sorted(m.tolist()) for m in prob.members)
    assert groups == [[0, 1], [2], [3]]
    # unclocked instances are never planned
    assert all(4 not in m for m in prob.members)
    assert prob.demand[:, FIELDS.index("FF")].sum() == 4


def test_oversized_clusters_are_split():
    lay = small_layout(width=20, height=16, cols=1, rows=2, cr_cols=2, cr_rows=4)
    n = 200
    nl = make_netlist(["FF"] * n, [], clocks={0: list(range(n))})
    x = np.full(n, 2.0)
    y = np.full(n, 2.0)
    prob = build_problem(x, y, nl, lay)
    f = FIELDS.index("FF")
    smallest = min(lay.region_capacity(r, "FF") for r in lay.regions if lay.region_capacity(r, "FF") > 0)
    assert len(prob.members) > 1
    assert prob.demand[:, f].max() <= 0.5 * smallest + 1e-9
    assert sorted(np.concatenate(prob.members).tolist()) == list(range(n))


def test_plan_clocks_meets_budgets(rng):
    lay = small_layout(width=20, height=16, cols=1, rows=2, cr_cols=2, cr_rows=4)
    n = 60
    nl = random_netlist(rng, n, 40, kinds=("FF",), clocks=6)
    x = rng.uniform(0, 20, n)
    y = rng.uniform(0, 16, n)
    mapping, sol, prob = plan_clocks(x, y, nl, lay)
    assert sol.optimal
    assert np.all(mapping.region[nl.arrays.inst_clock >= 0] >= 0)
    # instances placed at their region centers respect the clock budgets
    b = lay.region_boxes[mapping.region]
    cx = 0.5 * (b[:, 0] + b[:, 1])
    cy = 0.5 * (b[:, 2] + b[:, 3])
    assert check_constraints(clock_usage(cx, cy, nl, lay), lay) == []
