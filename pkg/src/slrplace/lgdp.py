"""Clock-aware legalization and independent-set-matching detailed placement."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .arch import FIELDS, FabricLayout, half_column_indices, slr_indices
from .clockmodel import ClockMapping, check_constraints, clock_usage
from .cnp import ClockCover, region_cells
from .sll import mapping_table, total_sll
from .wirelength import WirelengthModel

logger = logging.getLogger(__name__)

PHI_W = 0.02
ALPHA_LG = 4.0


class LegalizationError(RuntimeError):
    """No legal site found after the window reached its cap."""

    def __init__(self, message: str, report: dict):
        super().__init__(message)
        self.report = report


@dataclass
class LgConfig:
    phi_w: float = PHI_W
    alpha_lg: float = ALPHA_LG
    window: int = 5
    keep_legal: bool = True  # a cell already on a free legal site stays there
    pack: bool = False       # pair LUT/FF cells joined by a 2-pin net into one cluster


@dataclass
class DpConfig:
    alpha_lg: float = ALPHA_LG
    set_size: int = 32
    min_improvement: float = 5e-4
    max_passes: int = 8
    tile: int = 8


@dataclass
class Cluster:
    members: tuple[int, ...]
    fip: tuple[float, float]
    clocks: tuple[int, ...]
    demand: np.ndarray


@dataclass
class LegalPlacement:
    x: np.ndarray
    y: np.ndarray
    site: np.ndarray          # flat slice id sx * height + sy
    occupancy: np.ndarray     # (width, height, |FIELDS|)
    region: np.ndarray        # mapped region per cell, -1 if unmapped
    audit: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def copy(self) -> "LegalPlacement":
        return LegalPlacement(self.x.copy(), self.y.copy(), self.site.copy(), self.occupancy.copy(),
                              self.region.copy(), list(self.audit), dict(self.stats))


# ---------------------------------------------------------------- scoring

def score(members, nl, d_hpwl: float, d_sll: float, phi_w: float = PHI_W, alpha_lg: float = ALPHA_LG) -> float:
    """Clustering attraction of ``members`` minus the weighted wirelength and SLL increase."""
    arr = nl.arrays
    mem = np.fromiter(sorted(set(int(c) for c in members)), dtype=np.int64)
    nets = np.unique(np.concatenate([arr.nets_of(int(c)) for c in mem])) if len(mem) else []
    deg = arr.net_degree
    s = 0.0
    for e in nets:
        tp = int(deg[e])
        if tp <= 1:
            continue
        ip = int(np.isin(arr.pin_inst[arr.net_pins(e)], mem).sum())
        s += (ip - 1) / (tp - 1)
    return s - phi_w * (d_hpwl + alpha_lg * d_sll)


# ---------------------------------------------------------------- incremental metrics

class IncrementalState:
    """Positions plus per-net SLR pin counts and bounding-box lengths, updated per move."""

    def __init__(self, nl, layout: FabricLayout, x, y):
        self.nl = nl
        self.layout = layout
        self.topo = topo = layout.topology
        arr = self.arr = nl.arrays
        self.x = np.asarray(x, float).copy()
        self.y = np.asarray(y, float).copy()
        self.Z = topo.num_slrs
        self.z = self._zflat(self.x, self.y)
        E = len(arr.net_weight)
        self.cnt = np.zeros((E, self.Z), dtype=np.int64)
        if len(arr.pin_inst):
            np.add.at(self.cnt, (arr.pin_net, self.z[arr.pin_inst]), 1)
        self.pow2 = np.left_shift(np.int64(1), np.arange(self.Z, dtype=np.int64))
        self.mask = (self.cnt > 0).astype(np.int64) @ self.pow2 if E else np.zeros(0, np.int64)
        self.table = mapping_table(topo)
        self.lut = self.table.lookup_array() if self.Z <= 16 else None
        self.hp = (arr.net_degree >= 2) & ~arr.net_is_clock
        self.hp_len = np.zeros(E)
        for e in np.flatnonzero(self.hp):
            self.hp_len[e] = self._net_hpwl(e)
        self.wl = WirelengthModel(nl)

    def _zflat(self, x, y):
        zx, zy = slr_indices(x, y, self.topo)
        return zy * self.topo.cols + zx

    def sll_of(self, masks):
        masks = np.asarray(masks, dtype=np.int64)
        if self.lut is not None:
            return self.lut[masks]
        return np.array([self.table.weight(int(m)) for m in masks.ravel()], dtype=np.int64).reshape(masks.shape)

    def _net_hpwl(self, e) -> float:
        sl = self.arr.net_pins(e)
        inst = self.arr.pin_inst[sl]
        px = self.x[inst] + self.arr.pin_dx[sl]
        py = self.y[inst] + self.arr.pin_dy[sl]
        return float(px.max() - px.min() + py.max() - py.min())

    def nets_of(self, cells, include_clock: bool = True) -> np.ndarray:
        arr = self.arr
        nets = np.unique(np.concatenate([arr.nets_of(int(c)) for c in cells])) if len(cells) else np.zeros(0, np.int64)
        if not include_clock:
            nets = nets[~arr.net_is_clock[nets]]
        return nets

    def move_delta(self, cells, X, Y, include_clock: bool = True):
        """Exact (dHPWL, dSLL) of moving all ``cells`` onto each candidate point (X[k], Y[k])."""
        cells = np.atleast_1d(np.asarray(cells, dtype=np.int64))
        X = np.atleast_1d(np.asarray(X, float))
        Y = np.atleast_1d(np.asarray(Y, float))
        zc = self._zflat(X, Y)
        bit = self.pow2[zc]
        arr = self.arr
        dH = np.zeros(len(X))
        dS = np.zeros(len(X), dtype=np.int64)
        single = len(cells) == 1
        for e in self.nets_of(cells, include_clock):
            sl = arr.net_pins(e)
            inst = arr.pin_inst[sl]
            own = inst == cells[0] if single else np.isin(inst, cells)
            cnt = self.cnt[e].copy()
            np.subtract.at(cnt, self.z[inst[own]], 1)
            other = int((cnt > 0) @ self.pow2)
            dS += self.sll_of(other | bit) - self.sll_of(self.mask[e])
            if self.hp[e]:
                dx = arr.pin_dx[sl]
                dy = arr.pin_dy[sl]
                oth = ~own
                if oth.any():
                    ox = self.x[inst[oth]] + dx[oth]
                    oy = self.y[inst[oth]] + dy[oth]
                    xlo, xhi, ylo, yhi = ox.min(), ox.max(), oy.min(), oy.max()
                else:
                    xlo = ylo = np.inf
                    xhi = yhi = -np.inf
                odx, ody = dx[own], dy[own]
                w = (np.maximum(xhi, X + odx.max()) - np.minimum(xlo, X + odx.min())
                     + np.maximum(yhi, Y + ody.max()) - np.minimum(ylo, Y + ody.min()))
                dH += arr.net_weight[e] * (w - self.hp_len[e])
        return dH, dS

    def apply(self, cells, X: float, Y: float):
        """Move every cell in ``cells`` to (X, Y)."""
        cells = np.atleast_1d(np.asarray(cells, dtype=np.int64))
        self.apply_many(cells, np.full(len(cells), float(X)), np.full(len(cells), float(Y)))

    def apply_many(self, cells, X, Y):
        cells = np.asarray(cells, dtype=np.int64)
        arr = self.arr
        nets = self.nets_of(cells)
        for c in cells:
            for e in arr.nets_of(int(c)):
                sl = arr.net_pins(e)
                k = int(np.count_nonzero(arr.pin_inst[sl] == c))
                self.cnt[e, self.z[c]] -= k
        self.x[cells] = X
        self.y[cells] = Y
        self.z[cells] = self._zflat(self.x[cells], self.y[cells])
        for c in cells:
            for e in arr.nets_of(int(c)):
                sl = arr.net_pins(e)
                k = int(np.count_nonzero(arr.pin_inst[sl] == c))
                self.cnt[e, self.z[c]] += k
        for e in nets:
            self.mask[e] = int((self.cnt[e] > 0) @ self.pow2)
            if self.hp[e]:
                self.hp_len[e] = self._net_hpwl(e)

    # full recomputation, used as the reference
    def hpwl(self) -> float:
        return self.wl.hpwl(self.x, self.y)

    def sll(self) -> int:
        return total_sll(self.x, self.y, self.nl, self.topo)

    def cost(self, alpha_lg: float = ALPHA_LG) -> float:
        return self.hpwl() + alpha_lg * self.sll()


def delta_metrics(state: IncrementalState, cell: int, sx: int, sy: int) -> tuple[float, int]:
    """(dHPWL, dSLL) of moving ``cell`` to the center of slice (sx, sy)."""
    dH, dS = state.move_delta([cell], sx + 0.5, sy + 0.5)
    return float(dH[0]), int(dS[0])


# ---------------------------------------------------------------- legalization

def _capacity_cube(layout: FabricLayout) -> np.ndarray:
    return np.stack([layout.site_capacity(f) for f in FIELDS], axis=-1)


def _site_demand_order(nl, layout: FabricLayout, cells) -> list:
    """Sort key: demand as a fraction of the roomiest site, descending, then id."""
    arr = nl.arrays
    best = np.array([max((layout.kind_capacity(k, f) for k in range(4)), default=0) for f in FIELDS], dtype=float)
    frac = np.where(best > 0, arr.demand / np.maximum(best, 1e-12), np.where(arr.demand > 0, np.inf, 0.0))
    key = frac.max(axis=1)
    return sorted(cells, key=lambda c: (-key[c.members].sum(), c.members[0]))


def build_clusters(nl, x, y, pack: bool = False) -> list[Cluster]:
    arr = nl.arrays
    n = nl.num_instances
    partner = np.full(n, -1, dtype=np.int64)
    if pack:
        fi = {f: i for i, f in enumerate(FIELDS)}
        lut = (arr.demand[:, fi["LUTL"]] > 0) & (arr.demand.sum(axis=1) == arr.demand[:, fi["LUTL"]])
        ff = (arr.demand[:, fi["FF"]] > 0) & (arr.demand.sum(axis=1) == arr.demand[:, fi["FF"]])
        deg = arr.net_degree
        for e in np.flatnonzero((deg == 2) & ~arr.net_is_clock):
            a, b = (int(v) for v in arr.pin_inst[arr.net_pins(e)])
            if a == b or arr.fixed[a] or arr.fixed[b] or partner[a] >= 0 or partner[b] >= 0:
                continue
            if (lut[a] and ff[b]) or (ff[a] and lut[b]):
                partner[a], partner[b] = b, a
    out = []
    for i in range(n):
        if arr.fixed[i] or (0 <= partner[i] < i):
            continue
        mem = (i,) if partner[i] < 0 else (i, int(partner[i]))
        clocks = tuple(sorted({k for m in mem for k in nl.instances[m].clocks}))
        out.append(Cluster(mem, (float(np.mean(x[list(mem)])), float(np.mean(y[list(mem)]))), clocks,
                           arr.demand[list(mem)].sum(axis=0)))
    return out


class _Legalizer:
    def __init__(self, nl, layout: FabricLayout, x, y, mapping: ClockMapping, config: LgConfig):
        self.nl = nl
        self.layout = layout
        self.cfg = config
        self.arr = nl.arrays
        n = nl.num_instances
        self.W, self.H = layout.width, layout.height
        self.cap = _capacity_cube(layout)
        self.occ = np.zeros_like(self.cap)
        sx, sy = np.meshgrid(np.arange(self.W), np.arange(self.H), indexing="ij")
        self.site_hc = half_column_indices(sx + 0.5, sy + 0.5, layout)
        self.site_region = layout.region_indices(sx + 0.5, sy + 0.5)
        self.hc_clocks: dict[int, dict] = {}
        g = layout.cr_grid
        self.hc_limit = g.max_clocks_per_hc
        self.cover = ClockCover(region_cells(layout), g.max_clocks_per_cr)
        self.region = np.asarray(mapping.region, dtype=np.int64) if mapping is not None else np.full(n, -1)
        self.state = IncrementalState(nl, layout, x, y)
        self.site = np.full(n, -1, dtype=np.int64)
        self.site_cells: dict[int, list] = {}
        self.audit: list = []
        self.expansions = 0

    # bookkeeping
    def _commit(self, cells, sx, sy):
        s = sx * self.H + sy
        self.occ[sx, sy] += self.arr.demand[list(cells)].sum(axis=0)
        hc = int(self.site_hc[sx, sy])
        cnt = self.hc_clocks.setdefault(hc, {})
        for c in cells:
            for k in self.nl.instances[c].clocks:
                cnt[k] = cnt.get(k, 0) + 1
            self.site[c] = s
        self.site_cells.setdefault(s, []).extend(cells)
        self.state.apply(list(cells), sx + 0.5, sy + 0.5)

    def place_fixed(self):
        arr = self.arr
        for i in np.flatnonzero(arr.fixed):
            sx = min(int(np.floor(arr.fixed_x[i])), self.W - 1)
            sy = min(int(np.floor(arr.fixed_y[i])), self.H - 1)
            if np.any(self.occ[sx, sy] + arr.demand[i] > self.cap[sx, sy] + 1e-9):
                raise LegalizationError(f"fixed instance {i} does not fit its site ({sx}, {sy})",
                                        {"instance": int(i), "site": [sx, sy]})
            clocks = self.nl.instances[i].clocks
            if clocks:
                self.cover.add(clocks, int(self.site_region[sx, sy]))
            self._commit([int(i)], sx, sy)
            # a fixed cell keeps its own position, not the site center
            self.state.apply([int(i)], arr.fixed_x[i], arr.fixed_y[i])

    def _box(self, cl: Cluster):
        regs = {int(self.region[m]) for m in cl.members} - {-1}
        if len(regs) > 1:
            raise LegalizationError("cluster members mapped to different regions", {"members": list(cl.members)})
        if regs:
            r = regs.pop()
            l, rr, d, u = (int(round(v)) for v in self.layout.region_boxes[r])
            return r, (l, rr, d, u)
        return -1, (0, self.W, 0, self.H)

    def _cluster_gain(self, cl: Cluster, sites: np.ndarray) -> np.ndarray:
        """Site-dependent part of the clustering gain: nets already present in the slice."""
        arr = self.arr
        gain = np.zeros(len(sites))
        deg = arr.net_degree
        mem = np.asarray(cl.members)
        pos = {int(s): k for k, s in enumerate(sites)}
        for e in self.state.nets_of(mem, include_clock=False):
            tp = int(deg[e])
            if tp <= 1:
                continue
            inst = arr.pin_inst[arr.net_pins(e)]
            oth = inst[~np.isin(inst, mem)]
            occ = self.site[oth]
            for s in np.unique(occ[occ >= 0]):
                k = pos.get(int(s))
                if k is not None:
                    gain[k] += 1.0 / (tp - 1)
        return gain

    def place(self, cl: Cluster):
        cfg = self.cfg
        r, (bl, br, bd, bu) = self._box(cl)
        fx = min(max(cl.fip[0], bl), br - 1e-9)
        fy = min(max(cl.fip[1], bd), bu - 1e-9)
        cx, cy = int(np.floor(fx)), int(np.floor(fy))
        need = cl.demand > 0
        width = cfg.window
        while True:
            h = width // 2
            x0, x1 = max(bl, cx - h), min(br, cx + h + 1)
            y0, y1 = max(bd, cy - h), min(bu, cy + h + 1)
            gx, gy = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1), indexing="ij")
            gx, gy = gx.ravel(), gy.ravel()
            fits = np.all(self.occ[gx, gy][:, need] + cl.demand[need] <= self.cap[gx, gy][:, need] + 1e-9, axis=1)
            gx, gy = gx[fits], gy[fits]
            if cl.clocks and len(gx):
                ok = np.ones(len(gx), dtype=bool)
                for k, (sx, sy) in enumerate(zip(gx, gy)):
                    have = self.hc_clocks.get(int(self.site_hc[sx, sy]), {})
                    extra = sum(1 for c in cl.clocks if c not in have)
                    if len(have) + extra > self.hc_limit:
                        ok[k] = False
                        self.audit.append({"cells": list(cl.members), "site": int(sx * self.H + sy), "reason": "hc"})
                gx, gy = gx[ok], gy[ok]
            if len(gx) and self._try(cl, gx, gy, fx, fy):
                return
            if x0 == bl and x1 == br and y0 == bd and y1 == bu:
                break
            width *= 2
            self.expansions += 1
        where = f"region {r}" if r >= 0 else "the layout"
        raise LegalizationError(f"no legal slice for cells {list(cl.members)} in {where}",
                                {"cells": list(cl.members), "region": r, "box": [bl, br, bd, bu]})

    def _try(self, cl: Cluster, gx, gy, fx, fy) -> bool:
        cfg = self.cfg
        sites = gx * self.H + gy
        X, Y = gx + 0.5, gy + 0.5
        disp = np.abs(X - fx) + np.abs(Y - fy)
        dH, dS = self.state.move_delta(cl.members, X, Y)
        sc = self._cluster_gain(cl, sites) - cfg.phi_w * (dH + cfg.alpha_lg * dS)
        order = [int(k) for k in np.lexsort((sites, disp, -sc))]
        if cfg.keep_legal:
            same = (np.abs(X - cl.fip[0]) < 1e-9) & (np.abs(Y - cl.fip[1]) < 1e-9)
            order = [k for k in order if same[k]] + [k for k in order if not same[k]]
        for k in order:
            sx, sy = int(gx[k]), int(gy[k])
            if cl.clocks:
                if self.cover.add(cl.clocks, int(self.site_region[sx, sy])) is None:
                    self.audit.append({"cells": list(cl.members), "site": int(sites[k]), "reason": "cr"})
                    continue
            self._commit(list(cl.members), sx, sy)
            return True
        return False


def legalize(x, y, mapping: ClockMapping | None, layout: FabricLayout, nl, config: LgConfig | None = None) -> LegalPlacement:
    """Greedy slice assignment around the GP positions, honoring regions and clock budgets."""
    cfg = config or LgConfig()
    x = np.asarray(x, float)[: nl.num_instances]
    y = np.asarray(y, float)[: nl.num_instances]
    if mapping is None:
        mapping = ClockMapping.empty(nl.num_instances)
    lg = _Legalizer(nl, layout, x, y, mapping, cfg)
    lg.place_fixed()
    clusters = _site_demand_order(nl, layout, build_clusters(nl, x, y, cfg.pack))
    for cl in clusters:
        lg.place(cl)
    st = lg.state
    disp = np.abs(st.x - x) + np.abs(st.y - y)
    stats = {
        "clusters": len(clusters),
        "window_expansions": lg.expansions,
        "rejected_hc": sum(1 for a in lg.audit if a["reason"] == "hc"),
        "rejected_cr": sum(1 for a in lg.audit if a["reason"] == "cr"),
        "mean_displacement": float(disp.mean()) if len(disp) else 0.0,
        "max_displacement": float(disp.max()) if len(disp) else 0.0,
    }
    logger.info("legalized %d clusters, mean displacement %.3f", len(clusters), stats["mean_displacement"])
    return LegalPlacement(st.x.copy(), st.y.copy(), lg.site.copy(), lg.occ.copy(), lg.region.copy(), lg.audit, stats)


# ---------------------------------------------------------------- legality check

def occupancy_of(x, y, nl, layout: FabricLayout) -> tuple[np.ndarray, np.ndarray]:
    """Per-slice occupancy from positions, and the slice id per instance."""
    arr = nl.arrays
    sx = np.clip(np.floor(np.asarray(x, float)).astype(np.int64), 0, layout.width - 1)
    sy = np.clip(np.floor(np.asarray(y, float)).astype(np.int64), 0, layout.height - 1)
    occ = np.zeros((layout.width, layout.height, len(FIELDS)))
    np.add.at(occ, (sx, sy), arr.demand)
    return occ, sx * layout.height + sy


def check_legality(x, y, nl, layout: FabricLayout, mapping: ClockMapping | None = None,
                   inclusive: bool = True) -> list[dict]:
    """Overlap, off-site, region-assignment and clock budget violations of a placement."""
    arr = nl.arrays
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    out = []
    inside = (x >= 0) & (x <= layout.width) & (y >= 0) & (y <= layout.height)
    for i in np.flatnonzero(~inside):
        out.append({"kind": "bounds", "instance": int(i)})
    occ, site = occupancy_of(x, y, nl, layout)
    cap = _capacity_cube(layout)
    over = np.argwhere(np.any(occ > cap + 1e-9, axis=-1))
    for sx, sy in over:
        f = [FIELDS[k] for k in np.flatnonzero(occ[sx, sy] > cap[sx, sy] + 1e-9)]
        out.append({"kind": "overlap", "slice": int(sx * layout.height + sy), "site": [int(sx), int(sy)], "fields": f})
    mov = ~arr.fixed
    off = mov & ((np.abs(x - (np.floor(x) + 0.5)) > 1e-9) | (np.abs(y - (np.floor(y) + 0.5)) > 1e-9))
    for i in np.flatnonzero(off):
        out.append({"kind": "off_site", "instance": int(i)})
    if mapping is not None:
        for i in np.flatnonzero(mapping.outside(x, y) & mov):
            out.append({"kind": "region", "instance": int(i), "region": int(mapping.region[i])})
    out.extend(check_constraints(clock_usage(x, y, nl, layout, inclusive), layout))
    return out


# ---------------------------------------------------------------- detailed placement

def _independent_sets(cells, nl, size: int, sweeps: int = 4):
    """Greedy maximal sets of cells with pairwise disjoint signal nets, in the given order.

    Cells that clash with the set being built wait for a later sweep.
    """
    arr = nl.arrays
    pending = list(cells)
    for _ in range(sweeps):
        if len(pending) < 2:
            return
        used: set = set()
        cur, rest = [], []
        for c in pending:
            nets = [int(e) for e in arr.nets_of(c) if not arr.net_is_clock[e]]
            if used.isdisjoint(nets):
                cur.append(c)
                used.update(nets)
                if len(cur) == size:
                    yield cur
                    cur, used = [], set()
            else:
                rest.append(c)
        if len(cur) > 1:
            yield cur
        pending = rest


def _groups(lp: LegalPlacement, nl, tile: int) -> list:
    arr = nl.arrays
    buckets: dict = {}
    for i in np.flatnonzero(~arr.fixed):
        key = (tuple(arr.demand[i]), tuple(sorted(nl.instances[i].clocks)), int(lp.region[i]))
        buckets.setdefault(key, []).append(int(i))
    out = []
    for key in sorted(buckets):
        cells = buckets[key]
        if len(cells) < 2:
            continue
        # spatial order so that sets hold neighbouring cells
        cells.sort(key=lambda c: (int(lp.y[c]) // tile, int(lp.x[c]) // tile, lp.x[c], lp.y[c], c))
        out.append(cells)
    return out


def detailed_place(lp: LegalPlacement, nl, layout: FabricLayout, config: DpConfig | None = None) -> LegalPlacement:
    """Independent-set matching among interchangeable cells, cost HPWL + alpha * SLL.

    Cells in one set share resource demand, clock signature and mapped
    region, so any permutation keeps capacity, region and clock budgets
    intact. Their signal nets are disjoint, which makes the cost of a
    permutation the sum of per-cell costs and the assignment exact.
    """
    cfg = config or DpConfig()
    out = lp.copy()
    state = IncrementalState(nl, layout, out.x, out.y)
    cost = state.cost(cfg.alpha_lg)
    history = [cost]
    swaps = 0
    for p in range(cfg.max_passes):
        before = cost
        for cells in _groups(out, nl, cfg.tile):
            for s in _independent_sets(cells, nl, cfg.set_size):
                s = np.asarray(s, dtype=np.int64)
                X, Y = state.x[s], state.y[s]
                C = np.empty((len(s), len(s)))
                for a, c in enumerate(s):
                    dH, dS = state.move_delta([c], X, Y, include_clock=False)
                    C[a] = dH + cfg.alpha_lg * dS
                    C[a, a] = 0.0
                rows, cols = linear_sum_assignment(C)
                gain = C[rows, cols].sum()
                if gain < -1e-9:
                    moved = rows != cols
                    state.apply_many(s[rows[moved]], X[cols[moved]], Y[cols[moved]])
                    swaps += int(moved.sum())
        out.site[:] = np.floor(state.x).astype(np.int64) * layout.height + np.floor(state.y).astype(np.int64)
        cost = state.cost(cfg.alpha_lg)
        history.append(cost)
        logger.info("dp pass %d: cost %.6g", p + 1, cost)
        if before - cost < cfg.min_improvement * max(before, 1e-12):
            break
    out.x = state.x.copy()
    out.y = state.y.copy()
    fixed = nl.arrays.fixed
    out.site[fixed] = lp.site[fixed]
    out.stats = dict(out.stats, dp_passes=len(history) - 1, dp_moves=swaps, dp_cost=history)
    return out
