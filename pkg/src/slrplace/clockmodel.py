"""Clock resource usage, budget checks and the clock-region penalty."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arch import FabricLayout, half_column_indices, slr_indices


@dataclass
class ClockUsage:
    clocks: tuple[int, ...]           # clock net ids, row order of the arrays below
    H: np.ndarray                     # (K, R) horizontal usage
    V: np.ndarray                     # (K, R) vertical usage
    P: np.ndarray                     # (K, R) 0/1
    hc_count: dict = field(default_factory=dict)  # flat half-column id -> clock count

    @property
    def region_totals(self) -> np.ndarray:
        return self.P.sum(axis=0)


@dataclass
class ClockMapping:
    """Instance -> region assignment; ``region[i] == -1`` for unmapped instances."""

    region: np.ndarray
    lo_x: np.ndarray
    hi_x: np.ndarray
    lo_y: np.ndarray
    hi_y: np.ndarray

    @classmethod
    def from_regions(cls, region: np.ndarray, layout: FabricLayout) -> "ClockMapping":
        region = np.asarray(region, dtype=np.int64)
        boxes = layout.region_boxes
        safe = np.maximum(region, 0)
        b = boxes[safe]
        mapped = region >= 0
        inf = np.inf
        return cls(
            region=region,
            lo_x=np.where(mapped, b[:, 0], -inf),
            hi_x=np.where(mapped, b[:, 1], inf),
            lo_y=np.where(mapped, b[:, 2], -inf),
            hi_y=np.where(mapped, b[:, 3], inf),
        )

    @classmethod
    def empty(cls, n: int) -> "ClockMapping":
        inf = np.full(n, np.inf)
        return cls(np.full(n, -1, dtype=np.int64), -inf, inf.copy(), -inf.copy(), inf.copy())

    @property
    def mapped(self) -> np.ndarray:
        return self.region >= 0

    def outside(self, x, y) -> np.ndarray:
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        return self.mapped & ((x < self.lo_x) | (x > self.hi_x) | (y < self.lo_y) | (y > self.hi_y))


@dataclass(frozen=True)
class ClockPenaltyConfig:
    iota: float = 1e-4
    eps: float = 1e-2

    def __post_init__(self):
        if self.iota <= 0 or self.eps <= 0:
            raise ValueError("iota and eps must be positive")


def clock_members(nl) -> dict[int, np.ndarray]:
    return {k: np.array(sorted({p.inst for p in nl.nets[k].pins}), dtype=np.int64) for k in nl.clock_nets}


def clock_usage(x, y, nl, layout: FabricLayout, inclusive: bool = True) -> ClockUsage:
    """Per (clock, region) usage from per-SLR clock bounding boxes.

    In literal mode a clock uses a region when both overlaps H and V are
    strictly positive. The inclusive mode also counts degenerate boxes
    (a single instance, or a row of instances) that touch the region.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    members = clock_members(nl)
    clocks = tuple(members)
    regions = layout.regions
    K, R = len(clocks), len(regions)
    H = np.full((K, R), -np.inf)
    V = np.full((K, R), -np.inf)
    P = np.zeros((K, R), dtype=np.int64)
    topo = layout.topology
    boxes = layout.region_boxes
    slr_of_region = np.array([topo.flat(r.slr) for r in regions], dtype=np.int64)
    # the outer layout edge belongs to the last cell, so it is closed there
    r_open = np.where(boxes[:, 1] >= layout.width, np.inf, boxes[:, 1]) if R else boxes[:, 1]
    u_open = np.where(boxes[:, 3] >= layout.height, np.inf, boxes[:, 3]) if R else boxes[:, 3]
    hc_sets: dict[int, set] = {}
    for a, k in enumerate(clocks):
        idx = members[k]
        if len(idx) == 0:
            continue
        zx, zy = slr_indices(x[idx], y[idx], topo)
        zf = zy * topo.cols + zx
        for z in np.unique(zf):
            sel = idx[zf == z]
            x0, x1 = x[sel].min(), x[sel].max()
            y0, y1 = y[sel].min(), y[sel].max()
            rr = np.flatnonzero(slr_of_region == z)
            l, r, d, u = boxes[rr].T
            h = np.minimum(x1, r) - np.maximum(x0, l)
            v = np.minimum(y1, u) - np.maximum(y0, d)
            H[a, rr] = h
            V[a, rr] = v
            if inclusive:
                P[a, rr] = (x1 >= l) & (x0 < r_open[rr]) & (y1 >= d) & (y0 < u_open[rr])
            else:
                P[a, rr] = (h > 0) & (v > 0)
        for hc in np.unique(half_column_indices(x[idx], y[idx], layout)):
            hc_sets.setdefault(int(hc), set()).add(k)
    return ClockUsage(clocks, H, V, P, {hc: len(s) for hc, s in sorted(hc_sets.items())})


def check_constraints(usage: ClockUsage, layout: FabricLayout) -> list[dict]:
    """Every region over its clock budget and every half-column over its budget."""
    out = []
    g = layout.cr_grid
    totals = usage.region_totals if usage.P.size else np.zeros(len(layout.regions), dtype=np.int64)
    for reg, n in zip(layout.regions, totals):
        if n > g.max_clocks_per_cr:
            out.append({"kind": "cr", "region": reg.index, "cr": list(reg.cr), "slr": list(reg.slr),
                        "count": int(n), "limit": g.max_clocks_per_cr})
    for hc, n in usage.hc_count.items():
        if n > g.max_clocks_per_hc:
            out.append({"kind": "hc", "half_column": hc, "count": int(n), "limit": g.max_clocks_per_hc})
    return out


def clock_penalty(x, y, mapping: ClockMapping):
    """Piecewise quadratic distance to each mapped instance's region box.

    Returns (value, grad_x, grad_y); unmapped instances contribute nothing.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    m = mapping.mapped
    dxl = np.where(m & (x < mapping.lo_x), x - mapping.lo_x, 0.0)
    dxh = np.where(m & (x > mapping.hi_x), x - mapping.hi_x, 0.0)
    dyl = np.where(m & (y < mapping.lo_y), y - mapping.lo_y, 0.0)
    dyh = np.where(m & (y > mapping.hi_y), y - mapping.hi_y, 0.0)
    value = float(np.sum(dxl ** 2 + dxh ** 2 + dyl ** 2 + dyh ** 2))
    return value, 2.0 * (dxl + dxh), 2.0 * (dyl + dyh)


def update_eta(wl_grad_norm: float, clock_grad_norm: float, config: ClockPenaltyConfig = ClockPenaltyConfig()) -> float:
    return config.iota * wl_grad_norm / (clock_grad_norm + config.eps)
