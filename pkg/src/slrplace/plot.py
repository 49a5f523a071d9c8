"""Static SVG rendering of placements, density maps and convergence traces."""

from __future__ import annotations

import numpy as np

from .arch import FIELDS, FabricLayout, slr_indices

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf", "#393b79", "#637939", "#8c6d31", "#843c39", "#7b4173", "#3182bd")


def _num(v: float) -> str:
    return format(float(v), ".4f").rstrip("0").rstrip(".")


def _svg(width: float, height: float, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(width)}" height="{_num(height)}" '
            f'viewBox="0 0 {_num(width)} {_num(height)}">')
    return "\n".join([head, *body, "</svg>"]) + "\n"


def placement_svg(x, y, nl, layout: FabricLayout, scale: float = 8.0) -> str:
    """Instances as dots colored by SLR index, SLR borders and clock-region grid."""
    topo = layout.topology
    W, H = layout.width * scale, layout.height * scale
    body = [f'<rect x="0" y="0" width="{_num(W)}" height="{_num(H)}" fill="white" stroke="black"/>']
    g = layout.cr_grid
    for cx in range(1, g.cr_cols):
        X = cx * g.cr_width * scale
        body.append(f'<line x1="{_num(X)}" y1="0" x2="{_num(X)}" y2="{_num(H)}" stroke="#cccccc"/>')
    for cy in range(1, g.cr_rows):
        Y = H - cy * g.cr_height * scale
        body.append(f'<line x1="0" y1="{_num(Y)}" x2="{_num(W)}" y2="{_num(Y)}" stroke="#cccccc"/>')
    for zx in range(1, topo.cols):
        X = (topo.ref_point[0] + zx * topo.slr_width) * scale
        body.append(f'<line x1="{_num(X)}" y1="0" x2="{_num(X)}" y2="{_num(H)}" stroke="black" stroke-width="2"/>')
    for zy in range(1, topo.rows):
        Y = H - (topo.ref_point[1] + zy * topo.slr_height) * scale
        body.append(f'<line x1="0" y1="{_num(Y)}" x2="{_num(W)}" y2="{_num(Y)}" stroke="black" stroke-width="2"/>')
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    zx, zy = slr_indices(x, y, topo)
    z = zy * topo.cols + zx
    r = _num(0.3 * scale)
    for k in np.unique(z):
        color = PALETTE[int(k) % len(PALETTE)]
        dots = [f'<circle cx="{_num(x[i] * scale)}" cy="{_num(H - y[i] * scale)}" r="{r}"/>'
                for i in np.flatnonzero(z == k)]
        body.append(f'<g class="slr{int(k)}" fill="{color}">')
        body.extend(dots)
        body.append("</g>")
    return _svg(W, H, body)


def density_svg(x, y, nl, layout: FabricLayout, scale: float = 8.0) -> str:
    """Grayscale per-site utilization (max over resource fields)."""
    from .lgdp import occupancy_of

    occ, _ = occupancy_of(x, y, nl, layout)
    cap = np.stack([layout.site_capacity(f) for f in FIELDS], axis=-1)
    util = np.where(cap > 0, occ / np.maximum(cap, 1e-12), np.where(occ > 0, 1.0, 0.0)).max(axis=-1)
    util = np.clip(util, 0.0, 1.0)
    W, H = layout.width * scale, layout.height * scale
    body = []
    for sx in range(layout.width):
        for sy in range(layout.height):
            v = int(round(255 * (1.0 - util[sx, sy])))
            body.append(f'<rect x="{_num(sx * scale)}" y="{_num(H - (sy + 1) * scale)}" width="{_num(scale)}" '
                        f'height="{_num(scale)}" fill="rgb({v},{v},{v})"/>')
    return _svg(W, H, body)


def trace_svg(records: list[dict], keys=("overflow", "psi"), width: float = 480.0, height: float = 240.0) -> str:
    """One polyline per key over the iteration records, each scaled to its own range."""
    pad = 30.0
    body = [f'<rect x="0" y="0" width="{_num(width)}" height="{_num(height)}" fill="white"/>',
            f'<line class="axis" x1="{_num(pad)}" y1="{_num(height - pad)}" x2="{_num(width - pad)}" '
            f'y2="{_num(height - pad)}" stroke="black"/>',
            f'<line class="axis" x1="{_num(pad)}" y1="{_num(pad)}" x2="{_num(pad)}" '
            f'y2="{_num(height - pad)}" stroke="black"/>']
    n = len(records)
    for j, key in enumerate(keys):
        vals = np.array([float(r.get(key, 0.0)) for r in records])
        if n == 0:
            continue
        lo, hi = float(vals.min()), float(vals.max())
        span = hi - lo if hi > lo else 1.0
        xs = pad + (width - 2 * pad) * (np.arange(n) / max(n - 1, 1))
        ys = height - pad - (height - 2 * pad) * (vals - lo) / span
        pts = " ".join(f"{_num(a)},{_num(b)}" for a, b in zip(xs, ys))
        color = PALETTE[j % len(PALETTE)]
        body.append(f'<polyline class="{key}" fill="none" stroke="{color}" points="{pts}"/>')
        body.append(f'<text x="{_num(width - pad)}" y="{_num(pad + 14 * j)}" text-anchor="end" '
                    f'fill="{color}" font-size="11">{key}</text>')
    return _svg(width, height, body)
