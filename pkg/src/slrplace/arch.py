"""Fabric model: placement region, SLR topology, clock regions, sites.

All region membership uses half-open boxes ``[lo, hi)``. Points lying on the
top or right edge of the layout are clamped into the last cell so that every
point of the closed layout rectangle has exactly one owner.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

# resource field types handled by the density model
FIELDS = ("LUTL", "LUTM-AL", "FF", "CARRY", "DSP", "BRAM")

# site kinds laid out column by column
SITE_SLICEL = 0
SITE_SLICEM = 1
SITE_DSP = 2
SITE_BRAM = 3
SITE_NAMES = ("SLICEL", "SLICEM", "DSP", "BRAM")

DEFAULT_CAPACITY = {
    "SLICEL": {"LUTL": 4, "FF": 8, "CARRY": 1},
    "SLICEM": {"LUTL": 4, "LUTM-AL": 4, "FF": 8, "CARRY": 1},
    "DSP": {"DSP": 1},
    "BRAM": {"BRAM": 1},
}


class ArchConfigError(ValueError):
    """Invalid architecture description. ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class OutOfBoundsError(ValueError):
    pass


class SlrIndex(NamedTuple):
    zx: int
    zy: int


class ClockRegionId(NamedTuple):
    cx: int
    cy: int


class HalfColumnId(NamedTuple):
    cx: int
    cy: int
    col: int
    upper: bool


@dataclass(frozen=True)
class SlrTopology:
    cols: int
    rows: int
    slr_width: float
    slr_height: float
    ref_point: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not 1 <= self.cols <= 5:
            raise ArchConfigError("topology.cols", f"must be in [1, 5], got {self.cols}")
        if not 1 <= self.rows <= 5:
            raise ArchConfigError("topology.rows", f"must be in [1, 5], got {self.rows}")
        if self.slr_width <= 0 or self.slr_height <= 0:
            raise ArchConfigError("topology", "SLR width and height must be positive")

    @property
    def num_slrs(self) -> int:
        return self.cols * self.rows

    def flat(self, z: SlrIndex) -> int:
        return z.zy * self.cols + z.zx

    def unflat(self, k: int) -> SlrIndex:
        return SlrIndex(k % self.cols, k // self.cols)

    def __str__(self):
        return f"{self.cols}x{self.rows}"


@dataclass(frozen=True)
class ClockRegionGrid:
    cr_cols: int = 5
    cr_rows: int = 8
    cr_width: float = 1.0
    cr_height: float = 1.0
    max_clocks_per_cr: int = 24
    max_clocks_per_hc: int = 12
    hc_width: float = 1.0

    @property
    def hc_height(self) -> float:
        return self.cr_height / 2.0

    @property
    def columns_per_region(self) -> int:
        return int(math.ceil(self.cr_width / self.hc_width - 1e-9))

    def box(self, cr: ClockRegionId) -> tuple[float, float, float, float]:
        """(left, right, bottom, top) of a clock region."""
        l = cr.cx * self.cr_width
        d = cr.cy * self.cr_height
        return (l, l + self.cr_width, d, d + self.cr_height)


@dataclass(frozen=True)
class Region:
    """A clock region restricted to one SLR; the unit of clock budgeting."""

    index: int
    cr: ClockRegionId
    slr: SlrIndex
    box: tuple[float, float, float, float]

    @property
    def center(self) -> tuple[float, float]:
        l, r, d, u = self.box
        return (0.5 * (l + r), 0.5 * (d + u))


@dataclass(frozen=True)
class FabricLayout:
    width: int
    height: int
    topology: SlrTopology
    cr_grid: ClockRegionGrid
    column_types: tuple[int, ...]
    capacity: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_CAPACITY.items()})

    # ------------------------------------------------------------ sites
    @cached_property
    def site_kind(self) -> np.ndarray:
        """Site kind per (sx, sy), shape (width, height)."""
        col = np.asarray(self.column_types, dtype=np.int8)
        return np.repeat(col[:, None], self.height, axis=1)

    def site_capacity(self, fld: str) -> np.ndarray:
        """Per-site capacity of one resource field, shape (width, height)."""
        per_kind = np.array([self.capacity.get(name, {}).get(fld, 0) for name in SITE_NAMES], dtype=float)
        return per_kind[self.site_kind]

    def total_capacity(self, fld: str) -> float:
        return float(self.site_capacity(fld).sum())

    def kind_capacity(self, kind: int, fld: str) -> int:
        return int(self.capacity.get(SITE_NAMES[kind], {}).get(fld, 0))

    # ------------------------------------------------------------ regions
    @cached_property
    def regions(self) -> tuple[Region, ...]:
        """Clock regions split along SLR borders, ordered by (cy, cx, zy, zx)."""
        topo, g = self.topology, self.cr_grid
        out = []
        for cy in range(g.cr_rows):
            for cx in range(g.cr_cols):
                l, r, d, u = g.box(ClockRegionId(cx, cy))
                for zy in range(topo.rows):
                    sd, su = zy * topo.slr_height, (zy + 1) * topo.slr_height
                    bd, bu = max(d, sd), min(u, su)
                    if bu <= bd:
                        continue
                    for zx in range(topo.cols):
                        sl, sr = zx * topo.slr_width, (zx + 1) * topo.slr_width
                        bl, br = max(l, sl), min(r, sr)
                        if br <= bl:
                            continue
                        out.append(Region(len(out), ClockRegionId(cx, cy), SlrIndex(zx, zy), (bl, br, bd, bu)))
        return tuple(out)

    @cached_property
    def region_boxes(self) -> np.ndarray:
        return np.array([r.box for r in self.regions], dtype=float).reshape(-1, 4)

    @cached_property
    def _region_lookup(self) -> dict:
        return {(r.cr.cx, r.cr.cy, r.slr.zx, r.slr.zy): r.index for r in self.regions}

    def region_of(self, x: float, y: float) -> Region:
        cr, z = clock_region_of(x, y, self)
        return self.regions[self._region_lookup[(cr.cx, cr.cy, z.zx, z.zy)]]

    def region_indices(self, x, y) -> np.ndarray:
        """Vectorized region lookup for arrays of points (clamped into the layout)."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, self.width)
        y = np.clip(np.asarray(y, dtype=float), 0.0, self.height)
        g = self.cr_grid
        cx = np.minimum((x / g.cr_width).astype(np.int64), g.cr_cols - 1)
        cy = np.minimum((y / g.cr_height).astype(np.int64), g.cr_rows - 1)
        zx, zy = slr_indices(x, y, self.topology)
        table = self._region_table
        return table[cx, cy, zx, zy]

    @cached_property
    def _region_table(self) -> np.ndarray:
        g, t = self.cr_grid, self.topology
        table = np.full((g.cr_cols, g.cr_rows, t.cols, t.rows), -1, dtype=np.int64)
        for r in self.regions:
            table[r.cr.cx, r.cr.cy, r.slr.zx, r.slr.zy] = r.index
        return table

    def region_capacity(self, region: Region, fld: str) -> float:
        l, r, d, u = (int(round(v)) for v in region.box)
        return float(self.site_capacity(fld)[l:r, d:u].sum())

    def contains(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.width and 0.0 <= y <= self.height


# ---------------------------------------------------------------- construction

def build_layout(config: dict) -> FabricLayout:
    """Build a layout from a flat architecture description.

    Recognised keys: ``width``, ``height`` (or ``slr_width``/``slr_height``),
    ``cols``, ``rows``, ``cr_cols``, ``cr_rows``, ``max_clocks_per_cr``,
    ``max_clocks_per_hc``, ``hc_width``, ``dsp_columns``, ``bram_columns``,
    ``slicem_columns`` and ``capacity`` (site name -> {field: slots}).
    """
    cols = int(config.get("cols", 1))
    rows = int(config.get("rows", 1))
    if "width" in config:
        width = config["width"]
    elif "slr_width" in config:
        width = config["slr_width"] * cols
    else:
        raise ArchConfigError("width", "missing")
    if "height" in config:
        height = config["height"]
    elif "slr_height" in config:
        height = config["slr_height"] * rows
    else:
        raise ArchConfigError("height", "missing")
    for name, v in (("width", width), ("height", height)):
        if float(v) != int(v) or int(v) <= 0:
            raise ArchConfigError(name, f"must be a positive integer number of sites, got {v}")
    width, height = int(width), int(height)
    if width % cols:
        raise ArchConfigError("width", f"{width} not divisible by cols={cols}")
    if height % rows:
        raise ArchConfigError("height", f"{height} not divisible by rows={rows}")
    topo = SlrTopology(cols, rows, width / cols, height / rows)

    cr_cols = int(config.get("cr_cols", 5))
    cr_rows = int(config.get("cr_rows", 8))
    if cr_cols < 1 or cr_rows < 1:
        raise ArchConfigError("cr_cols", "clock region grid must be at least 1x1")
    if width % cr_cols:
        raise ArchConfigError("cr_cols", f"width {width} not divisible by cr_cols={cr_cols}")
    if height % cr_rows:
        raise ArchConfigError("cr_rows", f"height {height} not divisible by cr_rows={cr_rows}")
    hc_width = float(config.get("hc_width", 1.0))
    if hc_width <= 0:
        raise ArchConfigError("hc_width", "must be positive")
    grid = ClockRegionGrid(
        cr_cols=cr_cols,
        cr_rows=cr_rows,
        cr_width=width / cr_cols,
        cr_height=height / cr_rows,
        max_clocks_per_cr=int(config.get("max_clocks_per_cr", 24)),
        max_clocks_per_hc=int(config.get("max_clocks_per_hc", 12)),
        hc_width=hc_width,
    )

    kinds = [SITE_SLICEL] * width
    for key, kind in (("slicem_columns", SITE_SLICEM), ("dsp_columns", SITE_DSP), ("bram_columns", SITE_BRAM)):
        for c in config.get(key, ()):
            c = int(c)
            if not 0 <= c < width:
                raise ArchConfigError(key, f"column {c} outside [0, {width})")
            kinds[c] = kind

    capacity = {k: dict(v) for k, v in DEFAULT_CAPACITY.items()}
    for site, caps in (config.get("capacity") or {}).items():
        if site not in capacity:
            raise ArchConfigError(f"capacity.{site}", "unknown site kind")
        for fld, v in caps.items():
            if fld not in FIELDS:
                raise ArchConfigError(f"capacity.{site}.{fld}", "unknown resource field")
            if v < 0:
                raise ArchConfigError(f"capacity.{site}.{fld}", "capacity must be >= 0")
            capacity[site][fld] = v
    return FabricLayout(width, height, topo, grid, tuple(kinds), capacity)


# ---------------------------------------------------------------- index arithmetic

def _check_bounds(x: float, y: float, width: float, height: float) -> None:
    if not (0.0 <= x <= width and 0.0 <= y <= height) or math.isnan(x) or math.isnan(y):
        raise OutOfBoundsError(f"point ({x}, {y}) outside layout [0, {width}] x [0, {height}]")


def slr_index_of(x: float, y: float, topo: SlrTopology) -> SlrIndex:
    xr, yr = topo.ref_point
    _check_bounds(x - xr, y - yr, topo.cols * topo.slr_width, topo.rows * topo.slr_height)
    zx = min(int(math.floor(abs(x - xr) / topo.slr_width)), topo.cols - 1)
    zy = min(int(math.floor(abs(y - yr) / topo.slr_height)), topo.rows - 1)
    return SlrIndex(zx, zy)


def slr_indices(x, y, topo: SlrTopology) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`slr_index_of` without bounds checking (values are clamped)."""
    xr, yr = topo.ref_point
    zx = np.floor(np.abs(np.asarray(x, dtype=float) - xr) / topo.slr_width).astype(np.int64)
    zy = np.floor(np.abs(np.asarray(y, dtype=float) - yr) / topo.slr_height).astype(np.int64)
    return np.clip(zx, 0, topo.cols - 1), np.clip(zy, 0, topo.rows - 1)


def clock_region_of(x: float, y: float, layout: FabricLayout) -> tuple[ClockRegionId, SlrIndex]:
    _check_bounds(x, y, layout.width, layout.height)
    g = layout.cr_grid
    cx = min(int(math.floor(x / g.cr_width)), g.cr_cols - 1)
    cy = min(int(math.floor(y / g.cr_height)), g.cr_rows - 1)
    return ClockRegionId(cx, cy), slr_index_of(x, y, layout.topology)


def half_column_of(x: float, y: float, layout: FabricLayout) -> HalfColumnId:
    """Half-column containing a point; the vertical midpoint belongs to the upper half."""
    cr, _ = clock_region_of(x, y, layout)
    g = layout.cr_grid
    l, _, d, _ = g.box(cr)
    col = min(int(math.floor((x - l) / g.hc_width)), g.columns_per_region - 1)
    upper = y >= d + g.hc_height
    return HalfColumnId(cr.cx, cr.cy, col, bool(upper))


def half_column_indices(x, y, layout: FabricLayout) -> np.ndarray:
    """Flat half-column ids for arrays of points."""
    g = layout.cr_grid
    x = np.clip(np.asarray(x, dtype=float), 0.0, layout.width)
    y = np.clip(np.asarray(y, dtype=float), 0.0, layout.height)
    cx = np.minimum((x / g.cr_width).astype(np.int64), g.cr_cols - 1)
    cy = np.minimum((y / g.cr_height).astype(np.int64), g.cr_rows - 1)
    col = np.minimum(((x - cx * g.cr_width) / g.hc_width).astype(np.int64), g.columns_per_region - 1)
    upper = (y >= cy * g.cr_height + g.hc_height).astype(np.int64)
    return ((cy * g.cr_cols + cx) * g.columns_per_region + col) * 2 + upper


# ---------------------------------------------------------------- arch file

def parse_arch(text: str) -> FabricLayout:
    """Parse the INI-style architecture file (see README)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ArchConfigError("file", str(exc)) from exc

    def get(section, key, conv, default=None):
        if cp.has_option(section, key):
            raw = cp.get(section, key)
            try:
                return conv(raw)
            except ValueError as exc:
                raise ArchConfigError(f"{section}.{key}", f"bad value {raw!r}") from exc
        if default is None:
            raise ArchConfigError(f"{section}.{key}", "missing")
        return default

    def int_list(raw):
        return [int(t) for t in raw.split()]

    cfg: dict = {
        "width": get("dimensions", "width", float),
        "height": get("dimensions", "height", float),
        "cols": get("topology", "cols", int, 1),
        "rows": get("topology", "rows", int, 1),
        "cr_cols": get("clock", "cr_cols", int, 5),
        "cr_rows": get("clock", "cr_rows", int, 8),
        "max_clocks_per_cr": get("clock", "max_clocks_per_cr", int, 24),
        "max_clocks_per_hc": get("clock", "max_clocks_per_hc", int, 12),
        "hc_width": get("clock", "hc_width", float, 1.0),
        "slicem_columns": get("sites", "slicem_columns", int_list, []),
        "dsp_columns": get("sites", "dsp_columns", int_list, []),
        "bram_columns": get("sites", "bram_columns", int_list, []),
    }
    caps: dict = {}
    if cp.has_section("capacity"):
        for key, raw in cp.items("capacity"):
            site, _, fld = key.partition(".")
            site, fld = site.upper(), fld.upper()
            try:
                caps.setdefault(site, {})[fld] = float(raw)
            except ValueError as exc:
                raise ArchConfigError(f"capacity.{key}", f"bad value {raw!r}") from exc
    cfg["capacity"] = caps
    return build_layout(cfg)


def write_arch(layout: FabricLayout) -> str:
    cp = configparser.ConfigParser()
    cp["dimensions"] = {"width": str(layout.width), "height": str(layout.height)}
    cp["topology"] = {"cols": str(layout.topology.cols), "rows": str(layout.topology.rows)}
    g = layout.cr_grid
    cp["clock"] = {
        "cr_cols": str(g.cr_cols),
        "cr_rows": str(g.cr_rows),
        "max_clocks_per_cr": str(g.max_clocks_per_cr),
        "max_clocks_per_hc": str(g.max_clocks_per_hc),
        "hc_width": repr(g.hc_width),
    }
    cols = {k: [str(i) for i, t in enumerate(layout.column_types) if t == k] for k in (SITE_SLICEM, SITE_DSP, SITE_BRAM)}
    cp["sites"] = {
        "slicem_columns": " ".join(cols[SITE_SLICEM]),
        "dsp_columns": " ".join(cols[SITE_DSP]),
        "bram_columns": " ".join(cols[SITE_BRAM]),
    }
    cp["capacity"] = {
        f"{site}.{fld}".lower(): repr(float(v))
        for site in SITE_NAMES
        for fld, v in sorted(layout.capacity.get(site, {}).items())
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def with_topology(layout: FabricLayout, cols: int, rows: int) -> FabricLayout:
    """Same fabric, different SLR arrangement."""
    if layout.width % cols or layout.height % rows:
        raise ArchConfigError("topology", f"{layout.width}x{layout.height} not divisible into {cols}x{rows} SLRs")
    topo = SlrTopology(cols, rows, layout.width / cols, layout.height / rows)
    return FabricLayout(layout.width, layout.height, topo, layout.cr_grid, layout.column_types, layout.capacity)
