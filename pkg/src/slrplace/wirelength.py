"""HPWL, weighted-average wirelength in x/y, soft SLR coordinates and smooth SLL wirelength."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arch import SlrTopology

EXP_CLAMP = 40.0


@dataclass
class WlParams:
    gamma_h: float
    gamma_s: float
    psi: float = 0.0

    def __post_init__(self):
        if self.gamma_h <= 0 or self.gamma_s <= 0:
            raise ValueError("smoothing parameters must be positive")
        if self.psi < 0:
            raise ValueError("psi must be non-negative")


@dataclass
class WlEval:
    value: float
    grad_x: np.ndarray
    grad_y: np.ndarray
    wl_h: float = 0.0
    wl_s: float = 0.0
    # gradients of the two components kept apart for the weighting logic
    grad_h: tuple = field(default=None, repr=False)
    grad_s: tuple = field(default=None, repr=False)


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def wa_segments(p: np.ndarray, starts: np.ndarray, seg_of_pin: np.ndarray, beta: float):
    """Weighted-average max minus min per segment at inverse temperature ``beta``.

    Returns (per-segment value, per-pin derivative of the value).
    """
    if len(starts) == 0:
        return np.zeros(0), np.zeros_like(p)
    pmax = np.maximum.reduceat(p, starts)[seg_of_pin]
    pmin = np.minimum.reduceat(p, starts)[seg_of_pin]
    ta = beta * (p - pmax)
    tb = beta * (pmin - p)
    live_a = ta > -EXP_CLAMP
    live_b = tb > -EXP_CLAMP
    a = np.exp(np.maximum(ta, -EXP_CLAMP))
    b = np.exp(np.maximum(tb, -EXP_CLAMP))
    sa = np.add.reduceat(a, starts)
    sb = np.add.reduceat(b, starts)
    wa_p = np.add.reduceat(p * a, starts) / sa
    wa_m = np.add.reduceat(p * b, starts) / sb
    # clamped exponentials are constants, so their own slope term drops out
    ga = a / sa[seg_of_pin] * (1.0 + beta * (p - wa_p[seg_of_pin]) * live_a)
    gb = b / sb[seg_of_pin] * (1.0 - beta * (p - wa_m[seg_of_pin]) * live_b)
    return wa_p - wa_m, ga - gb


class WirelengthModel:
    """Precomputed pin layout for the signal nets of a netlist."""

    def __init__(self, nl, topo: SlrTopology | None = None):
        arr = nl.arrays
        self.n = nl.num_instances
        self.topo = topo
        deg = arr.net_degree
        keep = (deg >= 2) & ~arr.net_is_clock
        self.nets = np.flatnonzero(keep)
        pin_mask = keep[arr.pin_net]
        self.pin_inst = arr.pin_inst[pin_mask]
        self.pin_dx = arr.pin_dx[pin_mask]
        self.pin_dy = arr.pin_dy[pin_mask]
        kept_deg = deg[self.nets]
        self.starts = np.concatenate([[0], np.cumsum(kept_deg)[:-1]]).astype(np.int64) if len(kept_deg) else np.zeros(0, np.int64)
        self.seg = np.repeat(np.arange(len(self.nets)), kept_deg)
        self.weight = arr.net_weight[self.nets]
        self.movable = ~arr.fixed

    # -------------------------------------------------------------- exact
    def hpwl(self, x, y) -> float:
        if len(self.nets) == 0:
            return 0.0
        px = np.asarray(x, float)[self.pin_inst] + self.pin_dx
        py = np.asarray(y, float)[self.pin_inst] + self.pin_dy
        w = np.maximum.reduceat(px, self.starts) - np.minimum.reduceat(px, self.starts)
        h = np.maximum.reduceat(py, self.starts) - np.minimum.reduceat(py, self.starts)
        return float(np.dot(self.weight, w + h))

    # -------------------------------------------------------------- smooth
    def _scatter(self, g_pin):
        return np.bincount(self.pin_inst, weights=g_pin, minlength=self.n) * self.movable

    def wa_xy(self, x, y, gamma_h: float):
        if len(self.nets) == 0:
            return 0.0, np.zeros(self.n), np.zeros(self.n)
        w_pin = self.weight[self.seg]
        px = np.asarray(x, float)[self.pin_inst] + self.pin_dx
        py = np.asarray(y, float)[self.pin_inst] + self.pin_dy
        vx, gx = wa_segments(px, self.starts, self.seg, 1.0 / gamma_h)
        vy, gy = wa_segments(py, self.starts, self.seg, 1.0 / gamma_h)
        value = float(np.dot(self.weight, vx + vy))
        return value, self._scatter(gx * w_pin), self._scatter(gy * w_pin)

    def wa_z(self, x, y, gamma_s: float):
        """Smooth SLL wirelength: WA applied to each soft SLR coordinate."""
        if len(self.nets) == 0 or self.topo is None:
            return 0.0, np.zeros(self.n), np.zeros(self.n)
        zx, zy, dzx, dzy = soft_floor_z(x, y, self.topo, gamma_s)
        w_pin = self.weight[self.seg]
        value = 0.0
        gx = np.zeros(self.n)
        gy = np.zeros(self.n)
        if self.topo.cols > 1:
            v, g = wa_segments(zx[self.pin_inst], self.starts, self.seg, gamma_s)
            value += float(np.dot(self.weight, v))
            gx = self._scatter(g * w_pin) * dzx
        if self.topo.rows > 1:
            v, g = wa_segments(zy[self.pin_inst], self.starts, self.seg, gamma_s)
            value += float(np.dot(self.weight, v))
            gy = self._scatter(g * w_pin) * dzy
        return value, gx, gy

    def evaluate(self, x, y, params: WlParams) -> WlEval:
        vh, ghx, ghy = self.wa_xy(x, y, params.gamma_h)
        vs, gsx, gsy = self.wa_z(x, y, params.gamma_s)
        return WlEval(
            value=vh + params.psi * vs,
            grad_x=ghx + params.psi * gsx,
            grad_y=ghy + params.psi * gsy,
            wl_h=vh,
            wl_s=vs,
            grad_h=(ghx, ghy),
            grad_s=(gsx, gsy),
        )


def soft_floor_axis(u, delta: float, count: int, gamma_s: float):
    """Sum of sigmoids at the interior SLR boundaries 1 .. count-1 and its derivative."""
    u = np.asarray(u, dtype=float)
    if count <= 1:
        return np.zeros_like(u), np.zeros_like(u)
    k = np.arange(1, count, dtype=float)
    s = _sigmoid(gamma_s * (u[..., None] / delta - k))
    return s.sum(axis=-1), (gamma_s / delta) * (s * (1.0 - s)).sum(axis=-1)


def soft_floor_z(x, y, topo: SlrTopology, gamma_s: float):
    """Continuous SLR coordinates (zx, zy) and their partials wrt x and y."""
    xr, yr = topo.ref_point
    zx, dzx = soft_floor_axis(np.asarray(x, float) - xr, topo.slr_width, topo.cols, gamma_s)
    zy, dzy = soft_floor_axis(np.asarray(y, float) - yr, topo.slr_height, topo.rows, gamma_s)
    return zx, zy, dzx, dzy


def soft_floor_tail_bound(u, delta: float, count: int, gamma_s: float) -> np.ndarray:
    """Analytic bound on |soft - hard| along one axis: sum of sigmoid tails."""
    u = np.asarray(u, dtype=float)
    if count <= 1:
        return np.zeros_like(u)
    k = np.arange(1, count, dtype=float)
    return _sigmoid(-gamma_s * np.abs(u[..., None] / delta - k)).sum(axis=-1)


# ---------------------------------------------------------------- functional API

def hpwl(x, y, nl) -> float:
    return WirelengthModel(nl).hpwl(x, y)


def wa_wirelength_xy(x, y, nl, gamma_h: float):
    return WirelengthModel(nl).wa_xy(x, y, gamma_h)


def wa_wirelength_z(x, y, nl, topo: SlrTopology, gamma_s: float):
    return WirelengthModel(nl, topo).wa_z(x, y, gamma_s)


def total_wl_objective(x, y, nl, topo: SlrTopology, params: WlParams) -> WlEval:
    return WirelengthModel(nl, topo).evaluate(x, y, params)
