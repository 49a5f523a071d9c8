"""Clock network planning: map clocked instances to clock regions by branch and bound."""

from __future__ import annotations

import itertools
import logging
import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .arch import FIELDS, FabricLayout, SlrTopology, slr_indices
from .clockmodel import ClockMapping
from .sll import mapping_table, net_masks

logger = logging.getLogger(__name__)

MAX_ELIGIBLE_FANOUT = 100


class CnpInfeasible(RuntimeError):
    """No assignment satisfies the region, capacity and clock budget constraints."""

    def __init__(self, message: str, certificate: dict | None = None):
        super().__init__(message)
        self.certificate = certificate or {}


# ---------------------------------------------------------------- cost terms

def distance_cost(x: float, y: float, box) -> float:
    """L1 distance from a point to the nearest point of a (l, r, d, u) box."""
    l, r, d, u = box
    return max(l - x, 0.0, x - r) + max(d - y, 0.0, y - u)


def distance_matrix(x, y, boxes: np.ndarray) -> np.ndarray:
    x = np.asarray(x, float)[:, None]
    y = np.asarray(y, float)[:, None]
    l, r, d, u = (boxes[:, k][None, :] for k in range(4))
    return np.maximum(np.maximum(l - x, 0.0), x - r) + np.maximum(np.maximum(d - y, 0.0), y - u)


@dataclass
class PinCounter:
    visits: int = 0


def sll_increase(nodes, target_xy, x, y, nl, topo: SlrTopology, signed: bool = True,
                 counter: PinCounter | None = None) -> int:
    """SLL change when each node alone is moved to ``target_xy`` (Algorithm-1 loop form).

    Nodes already in the target's SLR contribute nothing. For every other
    node the eligible nets on its pins are re-counted with the node at the
    target. ``signed=False`` accumulates absolute changes instead.
    """
    arr = nl.arrays
    table = mapping_table(topo)
    zx, zy = slr_indices(np.asarray(x, float), np.asarray(y, float), topo)
    tz = slr_indices(np.array([target_xy[0]]), np.array([target_xy[1]]), topo)
    tbit = 1 << int(tz[1][0] * topo.cols + tz[0][0])
    total = 0
    for n in nodes:
        n = int(n)
        nbit = 1 << int(zy[n] * topo.cols + zx[n])
        if nbit == tbit:
            continue
        for e in arr.nets_of(n):
            if arr.net_is_clock[e]:
                continue
            pins = arr.pin_inst[arr.net_start[e]:arr.net_start[e + 1]]
            if len(pins) > MAX_ELIGIBLE_FANOUT:
                continue
            before = 0
            after = tbit
            for p in pins:
                if counter is not None:
                    counter.visits += 1
                b = 1 << int(zy[p] * topo.cols + zx[p])
                before |= b
                if p != n:
                    after |= b
            if bin(before).count("1") < 2 and bin(after).count("1") < 2:
                continue
            delta = table.weight(after) - table.weight(before)
            total += delta if signed else abs(delta)
    return total


def sll_increase_matrix(x, y, nl, topo: SlrTopology, signed: bool = True) -> np.ndarray:
    """Per-instance SLL change for a move into each SLR, shape (n, num_slrs)."""
    arr = nl.arrays
    n = nl.num_instances
    Z = topo.num_slrs
    out = np.zeros((n, Z), dtype=np.int64)
    zx, zy = slr_indices(np.asarray(x, float), np.asarray(y, float), topo)
    zf = zy * topo.cols + zx
    deg = arr.net_degree
    ok = ~arr.net_is_clock & (deg <= MAX_ELIGIBLE_FANOUT) & (deg >= 2)
    if not ok.any():
        return out
    masks = net_masks(np.asarray(x, float), np.asarray(y, float), nl, topo)
    pin_ok = ok[arr.pin_net]
    pn, pi = arr.pin_net[pin_ok], arr.pin_inst[pin_ok]
    cnt = np.zeros((len(deg), Z), dtype=np.int64)
    np.add.at(cnt, (pn, zf[pi]), 1)
    # distinct (instance, net) pairs with the instance's pin multiplicity
    pairs, mult = np.unique(np.stack([pi, pn], axis=1), axis=0, return_counts=True)
    inst, net = pairs[:, 0], pairs[:, 1]
    own = zf[inst]
    own_bit = np.left_shift(np.int64(1), own)
    sole = cnt[net, own] == mult
    base = np.where(sole, masks[net] & ~own_bit, masks[net])
    if Z <= 16:
        lut = mapping_table(topo).lookup_array()
        f = lut.__getitem__
    else:
        tbl = mapping_table(topo)
        f = np.vectorize(lambda m: tbl.weight(int(m)), otypes=[np.int64])
    before = f(masks[net])
    for z in range(Z):
        delta = f(base | (np.int64(1) << z)) - before
        if not signed:
            delta = np.abs(delta)
        delta = np.where(own == z, 0, delta)
        out[:, z] = np.bincount(inst, weights=delta, minlength=n).astype(np.int64)
    return out


# ---------------------------------------------------------------- problem

@dataclass
class CnpProblem:
    cost: np.ndarray            # (V, R) combined cost, inf where disallowed
    demand: np.ndarray          # (V, |FIELDS|)
    capacity: np.ndarray        # (R, |FIELDS|)
    clocks: list                # per item: tuple of clock ids
    region_cell: np.ndarray     # (R, 3) clock-region column, row and flat SLR of each region
    max_clocks: int = 24
    D: np.ndarray | None = None
    I: np.ndarray | None = None
    alpha: float = 1.0
    members: list = field(default_factory=list)  # per item: instance ids

    @property
    def num_items(self) -> int:
        return self.cost.shape[0]

    @property
    def num_regions(self) -> int:
        return self.cost.shape[1]


@dataclass
class CnpSolution:
    assign: np.ndarray
    objective: float
    optimal: bool
    gap: float
    nodes: int
    lower_bound: float
    certificate: dict = field(default_factory=dict)


def region_cells(layout: FabricLayout) -> np.ndarray:
    return np.array([(r.cr.cx, r.cr.cy, layout.topology.flat(r.slr)) for r in layout.regions], dtype=np.int64).reshape(-1, 3)


def _split_oversized(groups, x, y, demand, kind, layout: FabricLayout):
    """Split clusters larger than half the smallest region into spatially ordered chunks."""
    out = {}
    for key, mem in groups.items():
        f = FIELDS[key[1]]
        caps = [layout.region_capacity(r, f) for r in layout.regions]
        caps = [c for c in caps if c > 0]
        limit = 0.5 * min(caps) if caps else np.inf
        total = float(demand[mem, key[1]].sum())
        parts = int(np.ceil(total / limit)) if np.isfinite(limit) and total > limit else 1
        if parts <= 1:
            out[key] = mem
            continue
        order = sorted(mem, key=lambda i: (x[i], y[i], i))
        for c, chunk in enumerate(np.array_split(np.array(order, dtype=np.int64), parts)):
            out[key + (c,)] = [int(i) for i in chunk]
    return out


def build_problem(x, y, nl, layout: FabricLayout, alpha: float = 1.0, signed: bool = True,
                  cluster: bool = True) -> CnpProblem:
    """Cluster clocked movable instances and fill the cost matrices.

    Clusters group instances sharing clock signature, resource field and
    current region; each cluster is assigned as a unit.
    """
    arr = nl.arrays
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    clocks_of = [inst.clocks for inst in nl.instances]
    cand = np.flatnonzero(~arr.fixed & (arr.inst_clock >= 0))
    cur = layout.region_indices(x, y)
    kind = np.argmax(arr.demand, axis=1)
    groups: dict[tuple, list[int]] = {}
    for i in cand:
        key = (tuple(sorted(clocks_of[i])), int(kind[i]), int(cur[i])) if cluster else (int(i),)
        groups.setdefault(key, []).append(int(i))
    if cluster:
        groups = _split_oversized(groups, x, y, arr.demand, kind, layout)
    keys = sorted(groups)
    members = [np.array(groups[k], dtype=np.int64) for k in keys]
    boxes = layout.region_boxes
    topo = layout.topology
    slr_of_region = np.array([topo.flat(r.slr) for r in layout.regions], dtype=np.int64)
    Dm = distance_matrix(x[cand], y[cand], boxes) if len(cand) else np.zeros((0, len(boxes)))
    Im = sll_increase_matrix(x, y, nl, topo, signed)[cand][:, slr_of_region] if len(cand) else np.zeros((0, len(boxes)))
    pos = {int(i): k for k, i in enumerate(cand)}
    V, R = len(members), len(boxes)
    D = np.zeros((V, R))
    I = np.zeros((V, R))
    demand = np.zeros((V, len(FIELDS)))
    for v, mem in enumerate(members):
        rows = [pos[int(i)] for i in mem]
        D[v] = Dm[rows].sum(axis=0)
        I[v] = Im[rows].sum(axis=0)
        demand[v] = arr.demand[mem].sum(axis=0)
    capacity = np.array([[layout.region_capacity(r, f) for f in FIELDS] for r in layout.regions]).reshape(R, len(FIELDS))
    return CnpProblem(
        cost=D + alpha * I,
        demand=demand,
        capacity=capacity,
        clocks=[keys[v][0] if cluster else tuple(clocks_of[members[v][0]]) for v in range(V)],
        region_cell=region_cells(layout),
        max_clocks=layout.cr_grid.max_clocks_per_cr,
        D=D,
        I=I,
        alpha=alpha,
        members=members,
    )


# ---------------------------------------------------------------- clock budget bookkeeping

class ClockCover:
    """Incremental per-region clock counts from per-(clock, SLR) region-grid boxes."""

    def __init__(self, region_cell: np.ndarray, max_clocks: int):
        self.cell = region_cell
        self.max = max_clocks
        self.count = np.zeros(len(region_cell), dtype=np.int64)
        self.boxes: dict[tuple, tuple] = {}
        self.lookup: dict[int, dict] = {}
        for r, (cx, cy, z) in enumerate(region_cell):
            self.lookup.setdefault(int(z), {})[(int(cx), int(cy))] = r

    def _cells(self, z, box):
        x0, x1, y0, y1 = box
        tab = self.lookup.get(z, {})
        return [tab[(cx, cy)] for cx in range(x0, x1 + 1) for cy in range(y0, y1 + 1) if (cx, cy) in tab]

    def add(self, clocks, r):
        """Extend boxes for ``clocks`` to include region ``r``; returns an undo record or None if over budget."""
        cx, cy, z = (int(v) for v in self.cell[r])
        undo = []
        ok = True
        for k in clocks:
            old = self.boxes.get((k, z))
            new = (cx, cx, cy, cy) if old is None else (min(old[0], cx), max(old[1], cx), min(old[2], cy), max(old[3], cy))
            if new == old:
                undo.append((k, z, old, []))
                continue
            before = set(self._cells(z, old)) if old else set()
            added = [c for c in self._cells(z, new) if c not in before]
            self.count[added] += 1
            self.boxes[(k, z)] = new
            undo.append((k, z, old, added))
            if added and self.count[added].max() > self.max:
                ok = False
        if not ok:
            self.remove(undo)
            return None
        return undo

    def remove(self, undo):
        for k, z, old, added in reversed(undo):
            self.count[added] -= 1
            if old is None:
                self.boxes.pop((k, z), None)
            else:
                self.boxes[(k, z)] = old


def feasible_clock_routing(assign, problem: CnpProblem) -> bool:
    """Per-region clock counts from the assignment's bounding boxes stay within budget."""
    cover = ClockCover(problem.region_cell, problem.max_clocks)
    for v, r in enumerate(assign):
        if cover.add(problem.clocks[v], int(r)) is None:
            return False
    return True


# ---------------------------------------------------------------- solvers

def solve_mapping(problem: CnpProblem, node_limit: int = 200000, time_limit: float | None = None) -> CnpSolution:
    """Depth-first branch and bound.

    At every node the bound is the accumulated cost plus, for each
    unassigned item, its cheapest region that still has room for it. The
    item branched on is the one with the largest spread between its best
    and second-best remaining regions; children are tried cheapest first
    with ties going to the lowest region index.
    """
    V, R = problem.num_items, problem.num_regions
    if V == 0:
        return CnpSolution(np.zeros(0, dtype=np.int64), 0.0, True, 0.0, 0, 0.0)
    need = problem.demand.sum(axis=0)
    have = problem.capacity.sum(axis=0)
    short = [FIELDS[k] for k in range(len(FIELDS)) if need[k] > have[k] + 1e-9]
    if short:
        raise CnpInfeasible(f"demand exceeds total region capacity for {short}", {"fields": short})
    tol = 1e-9
    used = np.flatnonzero(problem.demand.sum(axis=0) > 0)
    demand = problem.demand[:, used]
    remaining = problem.capacity[:, used].astype(float).copy()
    cost = np.where(np.isfinite(problem.cost), problem.cost, np.inf)
    # a region that could never hold an item is removed from its choices up front
    cost = np.where(np.any(demand[:, None, :] > remaining[None, :, :] + tol, axis=2), np.inf, cost)
    if not np.all(np.isfinite(cost.min(axis=1))):
        bad = np.flatnonzero(~np.isfinite(cost.min(axis=1))).tolist()
        raise CnpInfeasible(f"items {bad} have no region large enough", {"items": bad})
    root_lb = float(cost.min(axis=1).sum())

    cover = ClockCover(problem.region_cell, problem.max_clocks)
    assign = np.full(V, -1, dtype=np.int64)
    free = np.ones(V, dtype=bool)
    best = [np.inf, None]
    nodes = [0]
    deadline = math.inf if time_limit is None else time.monotonic() + time_limit
    aborted = [False]

    def dfs(acc):
        rem = np.flatnonzero(free)
        if len(rem) == 0:
            if acc < best[0] - tol:
                best[0] = acc
                best[1] = assign.copy()
            return
        fits = np.all(demand[rem][:, None, :] <= remaining[None, :, :] + tol, axis=2)
        c = np.where(fits, cost[rem], np.inf)
        part = np.sort(c, axis=1)[:, :2] if R > 1 else np.concatenate([c, np.full((len(rem), 1), np.inf)], axis=1)
        mins = part[:, 0]
        if not np.all(np.isfinite(mins)):
            return
        total_min = float(mins.sum())
        if acc + total_min >= best[0] - tol:
            return
        regret = np.where(np.isfinite(part[:, 1]), part[:, 1] - mins, np.inf)
        k = int(np.argmax(regret))
        v = int(rem[k])
        rest = total_min - mins[k]
        row = c[k]
        for r in sorted(np.flatnonzero(np.isfinite(row)).tolist(), key=lambda r: (row[r], r)):
            if aborted[0]:
                return
            nodes[0] += 1
            if nodes[0] > node_limit or (nodes[0] & 255 == 0 and time.monotonic() > deadline):
                aborted[0] = True
                return
            acc_r = acc + row[r]
            if acc_r + rest >= best[0] - tol:
                break  # children are sorted, the rest cannot do better
            undo = cover.add(problem.clocks[v], r)
            if undo is None:
                continue
            remaining[r] -= demand[v]
            assign[v] = r
            free[v] = False
            dfs(acc_r)
            free[v] = True
            assign[v] = -1
            remaining[r] += demand[v]
            cover.remove(undo)

    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, V + 1000))
    try:
        dfs(0.0)
    finally:
        sys.setrecursionlimit(old)
    if best[1] is None:
        if aborted[0]:
            raise CnpInfeasible("search budget exhausted before a feasible assignment was found",
                                {"nodes": nodes[0]})
        raise CnpInfeasible("no assignment satisfies capacity and clock budgets", {"nodes": nodes[0]})
    obj = float(best[0])
    optimal = not aborted[0]
    gap = 0.0 if optimal else (obj - root_lb) / max(abs(obj), 1e-12)
    cert = {"capacity_ok": True, "clock_ok": feasible_clock_routing(best[1], problem)}
    if not optimal:
        logger.info("CNP stopped after %d nodes, gap %.3g", nodes[0], gap)
    return CnpSolution(best[1], obj, optimal, gap, nodes[0], root_lb, cert)


def solve_exhaustive(problem: CnpProblem) -> CnpSolution | None:
    """Enumerate every assignment (small problems only); None when infeasible."""
    V, R = problem.num_items, problem.num_regions
    if R ** V > 2_000_000:
        raise ValueError("problem too large for enumeration")
    combos = np.array(list(itertools.product(range(R), repeat=V)), dtype=np.int64).reshape(-1, V)
    costs = problem.cost[np.arange(V)[None, :], combos].sum(axis=1) if V else np.zeros(1)
    load = np.zeros((len(combos), R, problem.demand.shape[1]))
    for v in range(V):
        load[np.arange(len(combos)), combos[:, v]] += problem.demand[v]
    cap_ok = np.all(load <= problem.capacity[None] + 1e-9, axis=(1, 2)) & np.isfinite(costs)
    for idx in np.flatnonzero(cap_ok)[np.argsort(costs[cap_ok], kind="stable")]:
        if feasible_clock_routing(combos[idx], problem):
            return CnpSolution(combos[idx], float(costs[idx]), True, 0.0, len(combos), float(costs[idx]))
    return None


def mapping_from_solution(sol: CnpSolution, problem: CnpProblem, n: int, layout: FabricLayout) -> ClockMapping:
    region = np.full(n, -1, dtype=np.int64)
    for v, mem in enumerate(problem.members):
        region[mem] = sol.assign[v]
    return ClockMapping.from_regions(region, layout)


def plan_clocks(x, y, nl, layout: FabricLayout, alpha: float = 1.0, signed: bool = True,
                node_limit: int = 200000, time_limit: float | None = None):
    """Build, solve and convert; returns (ClockMapping, CnpSolution, CnpProblem)."""
    prob = build_problem(x, y, nl, layout, alpha=alpha, signed=signed)
    sol = solve_mapping(prob, node_limit=node_limit, time_limit=time_limit)
    return mapping_from_solution(sol, prob, nl.num_instances, layout), sol, prob
