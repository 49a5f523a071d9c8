"""Per-field electrostatic density: splatting, spectral Poisson solve, overflow and penalty."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .arch import FIELDS, FabricLayout

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class BinGrid:
    nx: int
    ny: int
    width: float
    height: float

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"degenerate bin grid {self.nx}x{self.ny}; need at least 2 bins per axis")

    @property
    def bw(self) -> float:
        return self.width / self.nx

    @property
    def bh(self) -> float:
        return self.height / self.ny

    @property
    def bin_area(self) -> float:
        return self.bw * self.bh


def auto_bins(layout: FabricLayout, cap: int = 128) -> tuple[int, int]:
    """Power-of-two grid with bins close to one site, limited to ``cap`` per axis."""
    def pick(extent):
        n = 2
        while n < extent and n < cap:
            n *= 2
        return n
    return pick(layout.width), pick(layout.height)


# ---------------------------------------------------------------- splatting

def _tent_cdf(t, h):
    u = np.clip(t / h, -1.0, 1.0)
    return np.where(u <= 0.0, 0.5 * (1.0 + u) ** 2, 1.0 - 0.5 * (1.0 - u) ** 2)


def _tent_pdf(t, h):
    return np.maximum(1.0 - np.abs(t / h), 0.0) / h


def _half_width(w):
    # a tent with this half-width has the variance of a box of width w
    return np.asarray(w, float) / SQRT2


def _axis_weights(c, h, b, nb):
    """Share of a unit tent (center c, half-width h) in each touched bin, and its derivative wrt c."""
    k = int(np.ceil(2.0 * np.max(h) / b)) + 1
    i0 = np.clip(np.floor((c - h) / b).astype(np.int64), 0, nb - 1)
    idx = i0[:, None] + np.arange(k)[None, :]
    left = idx * b - c[:, None]
    hh = h[:, None]
    ov = _tent_cdf(left + b, hh) - _tent_cdf(left, hh)
    dov = _tent_pdf(left, hh) - _tent_pdf(left + b, hh)
    valid = idx < nb
    return np.minimum(idx, nb - 1), np.where(valid, ov, 0.0), np.where(valid, dov, 0.0)


def _clamp_centers(c, h, extent):
    cc = np.clip(c, h, extent - h)
    return cc, (c > h) & (c < extent - h)


def splat(x, y, mass, wx, wy, grid: BinGrid) -> np.ndarray:
    """Deposit ``mass`` with a separable tent profile per item; returns (nx, ny) mass per bin.

    ``wx``/``wy`` are footprint widths; the tent is matched to a box of that
    width. Centers are kept far enough from the border for the whole
    profile to land inside the layout.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    rho = np.zeros(grid.nx * grid.ny)
    if len(x) == 0:
        return rho.reshape(grid.nx, grid.ny)
    hx, hy = _half_width(wx), _half_width(wy)
    cx, _ = _clamp_centers(x, hx, grid.width)
    cy, _ = _clamp_centers(y, hy, grid.height)
    ix, ox, _ = _axis_weights(cx, hx, grid.bw, grid.nx)
    iy, oy, _ = _axis_weights(cy, hy, grid.bh, grid.ny)
    for a in range(ix.shape[1]):
        fa = mass * ox[:, a]
        for b in range(iy.shape[1]):
            rho += np.bincount(ix[:, a] * grid.ny + iy[:, b], weights=fa * oy[:, b], minlength=grid.nx * grid.ny)
    return rho.reshape(grid.nx, grid.ny)


def splat_gradient(x, y, mass, wx, wy, grid: BinGrid, phi: np.ndarray):
    """Exact derivative of sum(phi * rho) wrt each item center.

    The tent shares are piecewise quadratic in the center, so the
    derivative is continuous and differs between items inside one bin.
    Items pinned against the border get zero in that direction.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) == 0:
        return np.zeros(0), np.zeros(0)
    hx, hy = _half_width(wx), _half_width(wy)
    cx, free_x = _clamp_centers(x, hx, grid.width)
    cy, free_y = _clamp_centers(y, hy, grid.height)
    ix, ox, dox = _axis_weights(cx, hx, grid.bw, grid.nx)
    iy, oy, doy = _axis_weights(cy, hy, grid.bh, grid.ny)
    gx = np.zeros(len(x))
    gy = np.zeros(len(x))
    for a in range(ix.shape[1]):
        for b in range(iy.shape[1]):
            p = phi[ix[:, a], iy[:, b]]
            gx += dox[:, a] * oy[:, b] * p
            gy += ox[:, a] * doy[:, b] * p
    return gx * mass * free_x, gy * mass * free_y


def splat_density(x, y, demand, grid: BinGrid, wx=None, wy=None) -> np.ndarray:
    """Density map of one field with footprints stretched to at least sqrt(2) bins."""
    demand = np.asarray(demand, float)
    n = len(demand)
    wx = np.full(n, SQRT2 * grid.bw) if wx is None else np.maximum(np.asarray(wx, float), SQRT2 * grid.bw)
    wy = np.full(n, SQRT2 * grid.bh) if wy is None else np.maximum(np.asarray(wy, float), SQRT2 * grid.bh)
    return splat(x, y, demand, wx, wy, grid)


def capacity_map(layout: FabricLayout, fld: str, grid: BinGrid) -> np.ndarray:
    """Site capacity integrated over bins by area overlap (sites are unit squares)."""
    cap = layout.site_capacity(fld)
    ox = _unit_overlap_matrix(layout.width, grid.nx, grid.bw)
    oy = _unit_overlap_matrix(layout.height, grid.ny, grid.bh)
    return ox.T @ cap @ oy


def _unit_overlap_matrix(n_sites, nb, b):
    s = np.arange(n_sites)[:, None]
    k = np.arange(nb)[None, :]
    return np.maximum(np.minimum(s + 1.0, (k + 1) * b) - np.maximum(s * 1.0, k * b), 0.0)


# ---------------------------------------------------------------- Poisson solve

class SpectralSolver:
    """Neumann Poisson solver on a bin grid using orthonormal cosine bases."""

    def __init__(self, grid: BinGrid):
        self.grid = grid
        self.cx, self.sx, self.wu = self._basis(grid.nx, grid.width)
        self.cy, self.sy, self.wv = self._basis(grid.ny, grid.height)
        w2 = self.wu[:, None] ** 2 + self.wv[None, :] ** 2
        w2[0, 0] = 1.0
        self.inv_w2 = 1.0 / w2
        self.inv_w2[0, 0] = 0.0

    @staticmethod
    def _basis(n, extent):
        i = np.arange(n)[:, None] + 0.5
        u = np.arange(n)[None, :]
        scale = np.full(n, math.sqrt(2.0 / n))
        scale[0] = math.sqrt(1.0 / n)
        c = np.cos(np.pi * u * i / n) * scale
        s = np.sin(np.pi * u * i / n) * scale
        return c, s, np.pi * np.arange(n) / extent

    def solve(self, source: np.ndarray):
        """Potential and field for a density (mass per unit area) source; DC term dropped."""
        a = self.cx.T @ source @ self.cy
        b = a * self.inv_w2
        phi = self.cx @ b @ self.cy.T
        ex = self.sx @ (b * self.wu[:, None]) @ self.cy.T
        ey = self.cx @ (b * self.wv[None, :]) @ self.sy.T
        return phi, ex, ey


def solve_potential(rho: np.ndarray, cap: np.ndarray, grid: BinGrid, solver: SpectralSolver | None = None):
    """Return (Phi, phi, xi_x, xi_y) for mass map ``rho`` against a capacity-shaped target.

    The target is the capacity map scaled to the same total mass, so the
    source has zero mean and the Neumann problem is solvable.
    """
    solver = solver or SpectralSolver(grid)
    total_cap = cap.sum()
    target = cap * (rho.sum() / total_cap) if total_cap > 0 else np.full_like(rho, rho.mean())
    src = (rho - target) / grid.bin_area
    phi, ex, ey = solver.solve(src)
    energy = 0.5 * float(np.sum((rho - target) * phi))
    return energy, phi, ex, ey


def density_overflow(rho: np.ndarray, cap: np.ndarray, total_demand: float | None = None) -> float:
    total = float(rho.sum()) if total_demand is None else float(total_demand)
    if total <= 0:
        return 0.0
    return float(np.maximum(rho - cap, 0.0).sum() / total)


def bilinear(field: np.ndarray, x, y, grid: BinGrid) -> np.ndarray:
    """Bilinear interpolation of a bin-centred field at arbitrary points."""
    fx = np.clip(np.asarray(x, float) / grid.bw - 0.5, 0.0, grid.nx - 1.0)
    fy = np.clip(np.asarray(y, float) / grid.bh - 0.5, 0.0, grid.ny - 1.0)
    i0 = np.minimum(np.floor(fx).astype(np.int64), grid.nx - 2)
    j0 = np.minimum(np.floor(fy).astype(np.int64), grid.ny - 2)
    tx = fx - i0
    ty = fy - j0
    return ((1 - tx) * (1 - ty) * field[i0, j0] + tx * (1 - ty) * field[i0 + 1, j0]
            + (1 - tx) * ty * field[i0, j0 + 1] + tx * ty * field[i0 + 1, j0 + 1])


# ---------------------------------------------------------------- multi-field model

@dataclass
class DensityPenaltyEval:
    value: float
    grad_x: np.ndarray
    grad_y: np.ndarray
    energy: dict
    penalty: dict
    overflow: dict
    overflow_total: float


@dataclass
class FieldData:
    name: str
    items: np.ndarray  # item indices (instances first, then fillers)
    mass: np.ndarray
    wx: np.ndarray
    wy: np.ndarray
    cap: np.ndarray
    real_demand: float
    n_real: int


class DensityModel:
    """Density fields for every resource type in use, with fillers.

    Items are the ``n`` netlist instances followed by the fillers; callers
    keep one coordinate vector of length ``n + num_fillers``.
    """

    def __init__(self, layout: FabricLayout, nl, bins: tuple[int, int] | None = None,
                 fillers: bool = True, filler_scale: float = 4.0, seed: int = 0):
        self.layout = layout
        self.grid = BinGrid(*(bins or (128, 128)), float(layout.width), float(layout.height))
        self.solver = SpectralSolver(self.grid)
        self.n = nl.num_instances
        demand = nl.arrays.demand
        rng = np.random.default_rng(seed)
        self.fields: list[FieldData] = []
        filler_field: list[int] = []
        filler_mass: list[float] = []
        for k, fld in enumerate(FIELDS):
            idx = np.flatnonzero(demand[:, k] > 0)
            if len(idx) == 0:
                continue
            cap = capacity_map(layout, fld, self.grid)
            site_cap = max(layout.kind_capacity(kind, fld) for kind in range(4))
            if site_cap <= 0:
                raise ValueError(f"field {fld} has demand but no capacity")
            d = demand[idx, k]
            free = layout.total_capacity(fld) - d.sum()
            n_fill = 0
            fmass = 0.0
            if fillers and free > 1e-9:
                fmass = filler_scale * float(d.mean())
                n_fill = int(math.floor(free / fmass))
                if n_fill:
                    fmass = free / n_fill
            filler_ids = self.n + len(filler_field) + np.arange(n_fill)
            filler_field.extend([len(self.fields)] * n_fill)
            filler_mass.extend([fmass] * n_fill)
            mass = np.concatenate([d, np.full(n_fill, fmass)])
            side = np.sqrt(mass / site_cap)
            self.fields.append(FieldData(
                name=fld,
                items=np.concatenate([idx, filler_ids]).astype(np.int64),
                mass=mass,
                wx=np.maximum(side, SQRT2 * self.grid.bw),
                wy=np.maximum(side, SQRT2 * self.grid.bh),
                cap=cap,
                real_demand=float(d.sum()),
                n_real=len(idx),
            ))
        self.num_fillers = len(filler_field)
        self.filler_field = np.asarray(filler_field, dtype=np.int64)
        self.filler_mass = np.asarray(filler_mass, dtype=float)
        self.filler_x = rng.uniform(0, layout.width, self.num_fillers)
        self.filler_y = rng.uniform(0, layout.height, self.num_fillers)

    @property
    def num_items(self) -> int:
        return self.n + self.num_fillers

    @property
    def field_names(self) -> list[str]:
        return [f.name for f in self.fields]

    def item_charge(self) -> np.ndarray:
        """Total mass of each item across fields, used as the density preconditioner."""
        q = np.zeros(self.num_items)
        for f in self.fields:
            np.add.at(q, f.items, f.mass)
        return q

    def density(self, f: FieldData, x, y, real_only: bool = False) -> np.ndarray:
        sel = slice(0, f.n_real) if real_only else slice(None)
        it = f.items[sel]
        return splat(x[it], y[it], f.mass[sel], f.wx[sel], f.wy[sel], self.grid)

    def overflow(self, x, y) -> tuple[dict, float]:
        per = {}
        over_mass = 0.0
        total = 0.0
        for f in self.fields:
            rho = self.density(f, x, y, real_only=True)
            per[f.name] = density_overflow(rho, f.cap, f.real_demand)
            over_mass += per[f.name] * f.real_demand
            total += f.real_demand
        return per, (over_mass / total if total > 0 else 0.0)

    def energies(self, x, y) -> dict:
        out = {}
        for f in self.fields:
            rho = self.density(f, x, y)
            out[f.name] = solve_potential(rho, f.cap, self.grid, self.solver)[0]
        return out

    def evaluate(self, x, y, lam: dict, weight: dict, with_overflow: bool = True) -> DensityPenaltyEval:
        """Penalty sum_s lam_s (Phi_s + W_s Phi_s^2 / 2) and its exact gradient."""
        gx = np.zeros(self.num_items)
        gy = np.zeros(self.num_items)
        value = 0.0
        energy, penalty = {}, {}
        for f in self.fields:
            rho = self.density(f, x, y)
            e, phi, _, _ = solve_potential(rho, f.cap, self.grid, self.solver)
            energy[f.name] = e
            ws = weight.get(f.name, 0.0)
            ls = lam.get(f.name, 0.0)
            penalty[f.name] = e + 0.5 * ws * e * e
            value += ls * penalty[f.name]
            coef = ls * (1.0 + ws * e)
            if coef != 0.0:
                it = f.items
                ax, ay = splat_gradient(x[it], y[it], f.mass, f.wx, f.wy, self.grid, phi)
                np.add.at(gx, it, coef * ax)
                np.add.at(gy, it, coef * ay)
        per, total = self.overflow(x, y) if with_overflow else ({}, float("nan"))
        return DensityPenaltyEval(value, gx, gy, energy, penalty, per, total)

    def field_norm_sum(self, x, y) -> float:
        """sum_i q_i |xi_i|_1 with the field bilinearly interpolated at item centres."""
        total = 0.0
        for f in self.fields:
            rho = self.density(f, x, y)
            _, _, ex, ey = solve_potential(rho, f.cap, self.grid, self.solver)
            it = f.items
            total += float(np.sum(f.mass * (np.abs(bilinear(ex, x[it], y[it], self.grid))
                                            + np.abs(bilinear(ey, x[it], y[it], self.grid)))))
        return total


def density_penalty(energies: dict, lam: dict, weight: dict) -> float:
    """Scalar augmented-Lagrangian density term from per-field energies."""
    return float(sum(lam.get(s, 0.0) * (e + 0.5 * weight.get(s, 0.0) * e * e) for s, e in energies.items()))
