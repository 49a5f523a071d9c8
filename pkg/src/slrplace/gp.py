"""Global placement: nested augmented-Lagrangian loop with a Nesterov subproblem solver."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .arch import FabricLayout
from .clockmodel import ClockMapping, ClockPenaltyConfig, check_constraints, clock_penalty, clock_usage, update_eta
from .cnp import CnpInfeasible, plan_clocks
from .density import DensityModel, auto_bins
from .sll import total_sll
from .wirelength import WirelengthModel, WlParams

logger = logging.getLogger(__name__)


class GpNumericalError(RuntimeError):
    def __init__(self, message: str, dump: dict):
        super().__init__(message)
        self.dump = dump


@dataclass
class GpConfig:
    seed: int = 1
    bins: tuple[int, int] | None = None
    max_iters: int = 1500
    target_overflow: float = 0.10
    # smoothing schedules
    gamma_h0_bins: float = 5.0
    gamma_h_decay: float = 0.98
    gamma_h_min_bins: float = 0.5
    gamma_s0: float = 1.0
    gamma_s_max: float = 20.0
    # wirelength weighting
    wlw: bool = True
    psi0: float = 0.5
    t_psi: float = 0.05
    rho: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps_psi: float = 1e-8
    wlw_band: tuple[float, float] = (0.15, 0.9)
    # density multipliers
    eta_w: float = 1e-4
    lambda_base: float = 1.1
    lambda_cap: float = 1.6
    density_weight_bounds: tuple[float, float] = (1e-6, 1e3)
    filler_scale: float = 4.0
    # routability stand-in
    inflation: bool = True
    kappa: float = 0.1
    inflate_below: float = 0.15
    # clock network planning
    cnp: bool = True
    cnp_alpha: float = 1.0
    cnp_rounds: int = 3
    cnp_settle: int = 5
    cnp_node_limit: int = 200000
    cnp_time_limit: float | None = None  # wall-clock caps break determinism
    iota: float = 1e-4
    eps: float = 1e-2
    inclusive_clock_usage: bool = True
    # optimizer
    jitter_bins: float = 0.1
    max_backtracks: int = 10

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


@dataclass
class WlwState:
    psi: float = 0.5
    E: float = 0.0
    m: float = 0.0
    v: float = 0.0
    last_sll: float | None = None
    rho: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: float = 0.05


def wlw_update(state: WlwState, sll: float) -> float:
    """One EMA + Adam step of the wirelength weight from the SLL growth.

    The moment estimates are divided by the constant factors 1 - beta, as
    the update is defined, rather than by the step-dependent 1 - beta^t.
    The first call only records the reference count.
    """
    if state.last_sll is None:
        state.last_sll = float(sll)
        return state.psi
    delta = float(sll) - state.last_sll
    state.last_sll = float(sll)
    state.E = state.rho * delta + (1.0 - state.rho) * state.E
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * state.E
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * state.E ** 2
    m_hat = state.m / (1.0 - state.beta1)
    v_hat = state.v / (1.0 - state.beta2)
    state.psi = max(0.0, state.psi + state.t * m_hat / (math.sqrt(v_hat) + state.eps))
    return state.psi


def init_lambda(wl_grad_l1: float, field_norm_sum: float, fields, eta_w: float = 1e-4) -> dict:
    """Equal initial density multipliers from the wirelength/field gradient ratio."""
    if field_norm_sum <= 0 or not math.isfinite(field_norm_sum):
        logger.warning("zero field norm at the initial placement; using lambda = %g", eta_w)
        return {f: eta_w for f in fields}
    val = eta_w * wl_grad_l1 / field_norm_sum
    return {f: val for f in fields}


def update_lambda(lam: dict, overflow: dict, base: float = 1.1, cap: float = 1.6) -> dict:
    """Multiplicative ascent; the factor is clamped to [1, cap] so lambda never decreases."""
    return {s: v * min(max(base ** overflow.get(s, 0.0), 1.0), cap) for s, v in lam.items()}


@dataclass
class GpResult:
    x: np.ndarray
    y: np.ndarray
    filler_x: np.ndarray
    filler_y: np.ndarray
    mapping: ClockMapping
    records: list
    summary: dict
    converged: bool


class GlobalPlacer:
    """Holds the optimizer state; :meth:`run` executes the full nested schedule."""

    def __init__(self, nl, layout: FabricLayout, config: GpConfig | None = None):
        self.nl = nl
        self.layout = layout
        self.cfg = cfg = config or GpConfig()
        self.n = nl.num_instances
        bins = cfg.bins or auto_bins(layout)
        self.dm = DensityModel(layout, nl, bins, fillers=True, filler_scale=cfg.filler_scale, seed=cfg.seed)
        self.wl = WirelengthModel(nl, layout.topology)
        self.grid = self.dm.grid
        arr = nl.arrays
        self.movable = np.concatenate([~arr.fixed, np.ones(self.dm.num_fillers, dtype=bool)])
        self.pins = np.concatenate([arr.inst_pin_count.astype(float), np.zeros(self.dm.num_fillers)])
        self.charge = self.dm.item_charge()
        bin_size = 0.5 * (self.grid.bw + self.grid.bh)
        self.gamma_h = cfg.gamma_h0_bins * bin_size
        self.gamma_h_min = cfg.gamma_h_min_bins * bin_size
        self.gamma_s = cfg.gamma_s0
        self.wlw = WlwState(psi=cfg.psi0, rho=cfg.rho, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps_psi, t=cfg.t_psi)
        self.eta = 0.0
        self.mapping = ClockMapping.empty(self.n)
        self.lam: dict = {}
        self.weight: dict = {}
        self.records: list = []
        self.clock_cfg = ClockPenaltyConfig(cfg.iota, cfg.eps)
        self.inflated = False
        self.cnp_rounds = 0
        self.cnp_info: list = []

        rng = np.random.default_rng(cfg.seed)
        x0 = np.full(self.n, 0.5 * layout.width) + rng.normal(0.0, cfg.jitter_bins * self.grid.bw, self.n)
        y0 = np.full(self.n, 0.5 * layout.height) + rng.normal(0.0, cfg.jitter_bins * self.grid.bh, self.n)
        x0 = np.where(arr.fixed, arr.fixed_x, x0)
        y0 = np.where(arr.fixed, arr.fixed_y, y0)
        self.x = self._project_x(np.concatenate([x0, self.dm.filler_x]))
        self.y = self._project_y(np.concatenate([y0, self.dm.filler_y]))

    # ---------------------------------------------------------------- pieces
    def _project_x(self, x):
        return np.clip(x, 0.0, self.layout.width)

    def _project_y(self, y):
        return np.clip(y, 0.0, self.layout.height)

    def wl_params(self) -> WlParams:
        return WlParams(self.gamma_h, self.gamma_s, self.wlw.psi)

    def objective(self, x, y, need_grad: bool = True):
        n = self.n
        wl = self.wl.evaluate(x[:n], y[:n], self.wl_params())
        dens = self.dm.evaluate(x, y, self.lam, self.weight, with_overflow=False)
        gx = dens.grad_x.copy()
        gy = dens.grad_y.copy()
        gx[:n] += wl.grad_x
        gy[:n] += wl.grad_y
        value = wl.value + dens.value
        clk = 0.0
        if self.eta > 0:
            clk, cgx, cgy = clock_penalty(x[:n], y[:n], self.mapping)
            value += self.eta * clk
            gx[:n] += self.eta * cgx
            gy[:n] += self.eta * cgy
        gx *= self.movable
        gy *= self.movable
        if not np.isfinite(value) or not (np.all(np.isfinite(gx)) and np.all(np.isfinite(gy))):
            raise GpNumericalError("non-finite objective or gradient", self.dump_state())
        return value, gx, gy, {"wl": wl, "density": dens, "clock": clk}

    def preconditioner(self):
        lam_q = np.zeros_like(self.charge)
        for f in self.dm.fields:
            lam_q[f.items] += self.lam.get(f.name, 0.0) * f.mass
        return np.maximum(1.0, self.pins + lam_q)

    def dump_state(self) -> dict:
        return {
            "lambda": dict(self.lam), "psi": self.wlw.psi, "eta": self.eta,
            "gamma_h": self.gamma_h, "gamma_s": self.gamma_s,
            "x_range": [float(np.nanmin(self.x)), float(np.nanmax(self.x))],
            "y_range": [float(np.nanmin(self.y)), float(np.nanmax(self.y))],
        }

    def initialize_multipliers(self):
        n = self.n
        wl = self.wl.evaluate(self.x[:n], self.y[:n], self.wl_params())
        g1 = float(np.abs(wl.grad_x).sum() + np.abs(wl.grad_y).sum())
        denom = self.dm.field_norm_sum(self.x, self.y)
        self.lam = init_lambda(g1, denom, self.dm.field_names, self.cfg.eta_w)
        lo, hi = self.cfg.density_weight_bounds
        self.weight = {s: float(np.clip(1.0 / e if e > 0 else hi, lo, hi)) for s, e in self.dm.energies(self.x, self.y).items()}

    # ---------------------------------------------------------------- Nesterov
    def _start_optimizer(self):
        f, gx, gy, _ = self.objective(self.x, self.y)
        self.u = (self.x.copy(), self.y.copy())
        self.v = (self.x.copy(), self.y.copy())
        self.a = 1.0
        self.grad_v = (gx, gy)
        self.f_v = f
        p = self.preconditioner()
        # first step: move the farthest-pushed item by about one bin
        gmax = max(np.max(np.abs(gx / p)), np.max(np.abs(gy / p)), 1e-12)
        self.alpha = self.grid.bw / gmax
        self.v_prev = None

    def step(self):
        """One Nesterov iteration with Lipschitz back-tracking on the step size."""
        p = self.preconditioner()
        vx, vy = self.v
        gx, gy = self.grad_v
        ux, uy = self.u
        alpha = self.alpha
        for _ in range(self.cfg.max_backtracks):
            nux = self._project_x(vx - alpha * gx / p)
            nuy = self._project_y(vy - alpha * gy / p)
            a_next = 0.5 * (1.0 + math.sqrt(4.0 * self.a * self.a + 1.0))
            coef = (self.a - 1.0) / a_next
            nvx = self._project_x(nux + coef * (nux - ux))
            nvy = self._project_y(nuy + coef * (nuy - uy))
            f, ngx, ngy, parts = self.objective(nvx, nvy)
            dv = math.sqrt(float(np.sum((nvx - vx) ** 2 + (nvy - vy) ** 2)))
            dg = math.sqrt(float(np.sum(((ngx - gx) / p) ** 2 + ((ngy - gy) / p) ** 2)))
            alpha_hat = dv / dg if dg > 0 else alpha
            if alpha_hat >= 0.95 * alpha:
                break
            alpha = alpha_hat
        # restart momentum when the step points uphill
        if float(np.sum(ngx * (nux - ux) + ngy * (nuy - uy))) > 0:
            a_next = 1.0
            nvx, nvy = nux, nuy
            f, ngx, ngy, parts = self.objective(nvx, nvy)
        self.u = (nux, nuy)
        self.v = (nvx, nvy)
        self.a = a_next
        self.grad_v = (ngx, ngy)
        self.alpha = alpha_hat if math.isfinite(alpha_hat) and alpha_hat > 0 else alpha
        self.x, self.y = nux, nuy
        self.f_v = f
        return f, parts

    def reset_momentum(self):
        self.x, self.y = self.u
        self._start_optimizer()

    # ---------------------------------------------------------------- outer loop
    def _inflate(self):
        """Scale instance areas once by their relative pin density."""
        arr = self.nl.arrays
        pins = arr.inst_pin_count.astype(float)
        mean = pins[pins > 0].mean() if np.any(pins > 0) else 1.0
        factor = 1.0 + self.cfg.kappa * np.minimum(pins / mean, 3.0)
        for f in self.dm.fields:
            real = f.items[:f.n_real]
            old_real = f.mass[:f.n_real].sum()
            f.mass[:f.n_real] *= factor[real]
            added = f.mass[:f.n_real].sum() - old_real
            nf = len(f.items) - f.n_real
            if nf:
                # fillers give up the space taken by inflation
                f.mass[f.n_real:] = np.maximum(f.mass[f.n_real:] - added / nf, 0.0)
            site_cap = max(self.layout.kind_capacity(k, f.name) for k in range(4))
            side = np.sqrt(f.mass / site_cap)
            f.wx[:] = np.maximum(side, math.sqrt(2.0) * self.grid.bw)
            f.wy[:] = np.maximum(side, math.sqrt(2.0) * self.grid.bh)
            f.real_demand = float(f.mass[:f.n_real].sum())
        self.charge = self.dm.item_charge()
        self.inflated = True

    def _update_gamma_s(self, overflow):
        lo = self.cfg.target_overflow
        hi = self.cfg.wlw_band[1]
        prog = min(max((hi - overflow) / (hi - lo), 0.0), 1.0)
        target = self.cfg.gamma_s0 * (self.cfg.gamma_s_max / self.cfg.gamma_s0) ** prog
        self.gamma_s = max(self.gamma_s, target)

    def _run_cnp(self):
        n = self.n
        try:
            mapping, sol, prob = plan_clocks(self.x[:n], self.y[:n], self.nl, self.layout, alpha=self.cfg.cnp_alpha,
                                             node_limit=self.cfg.cnp_node_limit, time_limit=self.cfg.cnp_time_limit)
        except CnpInfeasible as exc:
            logger.warning("clock network planning failed: %s", exc)
            self.cnp_info.append({"round": self.cnp_rounds + 1, "status": "infeasible", "message": str(exc)})
            self.cnp_rounds += 1
            return False
        self.mapping = mapping
        self.cnp_rounds += 1
        self.cnp_info.append({"round": self.cnp_rounds, "status": "optimal" if sol.optimal else "budget",
                              "objective": sol.objective, "gap": sol.gap, "nodes": sol.nodes,
                              "clusters": prob.num_items})
        return True

    def clock_violations(self) -> list:
        n = self.n
        usage = clock_usage(self.x[:n], self.y[:n], self.nl, self.layout, self.cfg.inclusive_clock_usage)
        return check_constraints(usage, self.layout)

    def run(self) -> GpResult:
        cfg = self.cfg
        n = self.n
        topo = self.layout.topology
        self.initialize_multipliers()
        self._start_optimizer()
        per, overflow = self.dm.overflow(self.x, self.y)
        converged = False
        last_cnp_iter = None
        for it in range(cfg.max_iters):
            f, parts = self.step()
            per, overflow = self.dm.overflow(self.x, self.y)
            sll = total_sll(self.x[:n], self.y[:n], self.nl, topo)
            wlw_active = cfg.wlw and cfg.wlw_band[0] < overflow < cfg.wlw_band[1]
            if wlw_active:
                wlw_update(self.wlw, sll)
            else:
                # the growth reference restarts whenever the band is re-entered
                self.wlw.last_sll = None
            self.records.append({
                "iter": it,
                "objective": f,
                "hpwl": self.wl.hpwl(self.x[:n], self.y[:n]),
                "sll": int(sll),
                "overflow": overflow,
                "overflow_field": dict(per),
                "energy": dict(parts["density"].energy),
                "lambda": dict(self.lam),
                "psi": self.wlw.psi,
                "wlw_active": bool(wlw_active),
                "eta": self.eta,
                "gamma_h": self.gamma_h,
                "gamma_s": self.gamma_s,
                "step": self.alpha,
                "cnp_round": self.cnp_rounds,
            })
            self.lam = update_lambda(self.lam, per, cfg.lambda_base, cfg.lambda_cap)
            self.gamma_h = max(self.gamma_h * cfg.gamma_h_decay, self.gamma_h_min)
            self._update_gamma_s(overflow)
            if cfg.inflation and not self.inflated and overflow < cfg.inflate_below:
                self._inflate()
                self.reset_momentum()
                continue
            if cfg.cnp and self.nl.clock_nets:
                if self.mapping.mapped.any():
                    wl = parts["wl"]
                    _, cgx, cgy = clock_penalty(self.x[:n], self.y[:n], self.mapping)
                    wl_norm = math.sqrt(float(np.sum(wl.grad_x ** 2 + wl.grad_y ** 2)))
                    clk_norm = math.sqrt(float(np.sum(cgx ** 2 + cgy ** 2)))
                    self.eta = update_eta(wl_norm, clk_norm, self.clock_cfg)
                if overflow <= cfg.target_overflow:
                    if self.cnp_rounds == 0:
                        self._run_cnp()
                        last_cnp_iter = it
                        self.reset_momentum()
                        continue
                    if it - last_cnp_iter < cfg.cnp_settle:
                        continue
                    if self.clock_violations() and self.cnp_rounds < cfg.cnp_rounds:
                        self._run_cnp()
                        last_cnp_iter = it
                        self.reset_momentum()
                        continue
                    converged = True
                    break
                continue
            if overflow <= cfg.target_overflow:
                converged = True
                break
        per, overflow = self.dm.overflow(self.x, self.y)
        if overflow > cfg.target_overflow:
            converged = False
        summary = {
            "iterations": len(self.records),
            "converged": converged,
            "overflow": overflow,
            "overflow_field": per,
            "hpwl": self.wl.hpwl(self.x[:n], self.y[:n]),
            "sll": total_sll(self.x[:n], self.y[:n], self.nl, topo),
            "psi": self.wlw.psi,
            "eta": self.eta,
            "lambda": dict(self.lam),
            "cnp": self.cnp_info,
            "clock_violations": self.clock_violations() if self.nl.clock_nets else [],
            "outside_fraction": float(self.mapping.outside(self.x[:n], self.y[:n]).sum() / max(self.mapping.mapped.sum(), 1)),
            "bins": [self.grid.nx, self.grid.ny],
            "fillers": self.dm.num_fillers,
        }
        if not converged:
            logger.warning("global placement did not reach overflow %.2f (got %.3f)", cfg.target_overflow, overflow)
        return GpResult(self.x[:n].copy(), self.y[:n].copy(), self.x[n:].copy(), self.y[n:].copy(),
                        self.mapping, self.records, summary, converged)


def run_global_placement(nl, layout: FabricLayout, config: GpConfig | None = None) -> GpResult:
    return GlobalPlacer(nl, layout, config).run()
