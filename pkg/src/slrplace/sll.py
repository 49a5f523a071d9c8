"""SLL accounting: per-net die crossings as an MST over SLR index vectors."""

from __future__ import annotations

import itertools
import threading

import numpy as np

from .arch import SlrIndex, SlrTopology, slr_indices


class OracleSizeError(ValueError):
    pass


def _prim_l1(points) -> int:
    pts = list(points)
    if len(pts) <= 1:
        return 0
    in_tree = [False] * len(pts)
    best = [float("inf")] * len(pts)
    best[0] = 0
    total = 0
    for _ in range(len(pts)):
        u = min((i for i in range(len(pts)) if not in_tree[i]), key=lambda i: best[i])
        in_tree[u] = True
        total += best[u]
        for v in range(len(pts)):
            if not in_tree[v]:
                d = abs(pts[u][0] - pts[v][0]) + abs(pts[u][1] - pts[v][1])
                if d < best[v]:
                    best[v] = d
    return int(total)


def mst_weight_oracle(points) -> int:
    """Exact L1 MST weight by Kruskal over the complete graph (at most 12 points)."""
    pts = sorted(set(tuple(int(c) for c in p) for p in points))
    if len(pts) > 12:
        raise OracleSizeError(f"oracle limited to 12 points, got {len(pts)}")
    parent = list(range(len(pts)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    edges = sorted(
        (abs(p[0] - q[0]) + abs(p[1] - q[1]), i, j)
        for (i, p), (j, q) in itertools.combinations(enumerate(pts), 2)
    )
    total = 0
    for w, i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            total += w
    return total


class SllMappingTable:
    """Lazily filled cache from a set of occupied SLRs (bitmask) to its MST weight."""

    def __init__(self, topo: SlrTopology):
        self.topo = topo
        self._cache: dict[int, int] = {}
        self._lock = threading.Lock()

    def key(self, indices) -> int:
        mask = 0
        for z in indices:
            mask |= 1 << (int(z[1]) * self.topo.cols + int(z[0]))
        return mask

    def weight(self, mask: int) -> int:
        w = self._cache.get(mask)
        if w is None:
            pts = [(k % self.topo.cols, k // self.topo.cols) for k in range(self.topo.num_slrs) if mask >> k & 1]
            w = _prim_l1(pts)
            with self._lock:
                self._cache[mask] = w
        return w

    def lookup_array(self) -> np.ndarray:
        """Dense table over every mask; the SLR count is at most 25 so only small topologies fit."""
        n = self.topo.num_slrs
        if n > 16:
            raise ValueError("dense table limited to 16 SLRs")
        return np.array([self.weight(m) for m in range(1 << n)], dtype=np.int64)


_TABLES: dict[SlrTopology, SllMappingTable] = {}


def mapping_table(topo: SlrTopology) -> SllMappingTable:
    t = _TABLES.get(topo)
    if t is None:
        t = _TABLES.setdefault(topo, SllMappingTable(topo))
    return t


def net_sll_count(slr_set, topo: SlrTopology) -> int:
    """SLLs needed to connect the given SLR index vectors."""
    table = mapping_table(topo)
    return table.weight(table.key(slr_set))


def net_masks(x: np.ndarray, y: np.ndarray, nl, topo: SlrTopology, include_clock: bool = True) -> np.ndarray:
    """Per-net bitmask of occupied SLRs (hard indices of instance positions)."""
    arr = nl.arrays
    zx, zy = slr_indices(x, y, topo)
    bit = np.left_shift(np.int64(1), zy * topo.cols + zx)
    pin_bits = bit[arr.pin_inst]
    masks = np.zeros(len(arr.net_weight), dtype=np.int64)
    if len(pin_bits):
        np.bitwise_or.at(masks, arr.pin_net, pin_bits)
    if not include_clock:
        masks[arr.net_is_clock] = 0
    return masks


def per_net_sll(x, y, nl, topo: SlrTopology, include_clock: bool = True) -> np.ndarray:
    masks = net_masks(np.asarray(x, float), np.asarray(y, float), nl, topo, include_clock)
    table = mapping_table(topo)
    if topo.num_slrs <= 16:
        return table.lookup_array()[masks]
    return np.array([table.weight(int(m)) for m in masks], dtype=np.int64)


def total_sll(x, y, nl, topo: SlrTopology, include_clock: bool = True) -> int:
    """Total SLL count of a placement; clock nets count unless excluded."""
    return int(per_net_sll(x, y, nl, topo, include_clock).sum())


def slr_of(x: float, y: float, topo: SlrTopology) -> SlrIndex:
    zx, zy = slr_indices(x, y, topo)
    return SlrIndex(int(zx), int(zy))
