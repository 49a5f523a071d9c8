"""Acceptance suite: every criterion at its stated tolerance, one summary line each."""

import itertools
import math
import time

import numpy as np
import pytest

from conftest import random_cnp_problem, random_netlist, record_criterion, small_layout
from slrplace.arch import FIELDS, SlrIndex, SlrTopology, build_layout, with_topology
from slrplace.cli import main, write_placement
from slrplace.clockmodel import ClockMapping, clock_penalty
from slrplace.cnp import CnpInfeasible, solve_exhaustive, solve_mapping
from slrplace.flow import FlowConfig, ablation_config, run_flow
from slrplace.gp import GlobalPlacer, GpConfig
from slrplace.arch import write_arch
from slrplace.lgdp import IncrementalState, delta_metrics
from slrplace.netlist import arch_config_for, generate_synthetic, suite_params, write_netlist
from slrplace.sll import mst_weight_oracle, net_sll_count
from slrplace.wirelength import WlParams, soft_floor_axis, soft_floor_tail_bound

pytestmark = pytest.mark.slow

TOPOLOGIES = ((1, 4), (2, 2))
ARMS = ("gp", "gp+lg+dp", "full", "no-wlw")


def geomean(values):
    return math.exp(sum(math.log(v) for v in values) / len(values))


# ---------------------------------------------------------------- 1

def test_criterion_1_sll_oracle_equivalence():
    t0 = time.perf_counter()
    mismatches = 0
    checked = 0
    for cols in range(1, 5):
        for rows in range(1, 5):
            topo = SlrTopology(cols, rows, 1.0, 1.0)
            slrs = [(a, b) for b in range(rows) for a in range(cols)]
            for k in range(1, 6):
                for sub in itertools.combinations(slrs, k):
                    checked += 1
                    if net_sll_count([SlrIndex(*p) for p in sub], topo) != mst_weight_oracle(sub):
                        mismatches += 1
    rng = np.random.default_rng(2024)
    for _ in range(10_000):
        cols, rows = (int(v) for v in rng.integers(1, 6, 2))
        topo = SlrTopology(cols, rows, 1.0, 1.0)
        k = int(rng.integers(6, 13))
        pts = [(int(rng.integers(0, cols)), int(rng.integers(0, rows))) for _ in range(k)]
        checked += 1
        if net_sll_count([SlrIndex(*p) for p in pts], topo) != mst_weight_oracle(pts):
            mismatches += 1
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and dt < 60
    record_criterion(1, ok, f"{checked} SLR sets, {mismatches} mismatches, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 2

def _fd_rel(f, x, y, grad_x, grad_y, coords, h):
    fd, an = [], []
    for i, axis in coords:
        xp, xm, yp, ym = x.copy(), x.copy(), y.copy(), y.copy()
        if axis == 0:
            xp[i] += h
            xm[i] -= h
            an.append(grad_x[i])
        else:
            yp[i] += h
            ym[i] -= h
            an.append(grad_y[i])
        fd.append((f(xp, yp) - f(xm, ym)) / (2 * h))
    fd, an = np.array(fd), np.array(an)
    return float(np.linalg.norm(fd - an) / max(np.linalg.norm(fd), 1e-12))


def test_criterion_2_gradient_suite():
    t0 = time.perf_counter()
    worst = {"wirelength": 0.0, "clock": 0.0, "density": 0.0, "total": 0.0}
    for d in range(100):
        rng = np.random.default_rng(1000 + d)
        lay = small_layout(width=20, height=16, cols=1 + d % 2, rows=2, cr_rows=4)
        nl = random_netlist(rng, 50, 40, kinds=("LUTL", "FF", "LUTL"), clocks=3)
        g = GlobalPlacer(nl, lay, GpConfig(seed=d, bins=(8, 8)))
        n = nl.num_instances
        g.initialize_multipliers()
        g.lam = {f: float(rng.uniform(0.1, 2.0)) for f in g.dm.field_names}
        g.weight = {f: float(rng.uniform(0.0, 1.0)) for f in g.dm.field_names}
        g.eta = float(rng.uniform(0.1, 2.0))
        g.gamma_h = float(rng.uniform(0.5, 3.0))
        g.gamma_s = float(rng.uniform(1.0, 20.0))
        g.wlw.psi = float(rng.uniform(0.1, 3.0))
        g.mapping = ClockMapping.from_regions(np.where(rng.random(n) < 0.5, rng.integers(0, len(lay.regions), n), -1), lay)
        x = rng.uniform(0.5, 19.5, g.dm.num_items)
        y = rng.uniform(0.5, 15.5, g.dm.num_items)
        picks = rng.choice(n, 10, replace=False)
        coords = [(int(i), a) for i in picks for a in (0, 1)]
        p = g.wl_params()
        wl = g.wl.evaluate(x[:n], y[:n], p)
        worst["wirelength"] = max(worst["wirelength"], _fd_rel(
            lambda a, b: g.wl.evaluate(a[:n], b[:n], p).value, x, y, wl.grad_x, wl.grad_y, coords, 1e-6))
        _, cgx, cgy = clock_penalty(x[:n], y[:n], g.mapping)
        if np.any(cgx[picks]) or np.any(cgy[picks]):
            worst["clock"] = max(worst["clock"], _fd_rel(
                lambda a, b: clock_penalty(a[:n], b[:n], g.mapping)[0], x, y, cgx, cgy, coords, 1e-6))
        dens = g.dm.evaluate(x, y, g.lam, g.weight, with_overflow=False)
        worst["density"] = max(worst["density"], _fd_rel(
            lambda a, b: g.dm.evaluate(a, b, g.lam, g.weight, with_overflow=False).value,
            x, y, dens.grad_x, dens.grad_y, coords, 1e-5))
        _, gx, gy, _ = g.objective(x, y)
        worst["total"] = max(worst["total"], _fd_rel(lambda a, b: g.objective(a, b)[0], x, y, gx, gy, coords, 1e-5))
    dt = time.perf_counter() - t0
    ok = (worst["wirelength"] <= 1e-4 and worst["clock"] <= 1e-4 and worst["density"] <= 5e-3
          and worst["total"] <= 5e-3 and dt < 300)
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    record_criterion(2, ok, f"worst relative error: {detail}; {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 3

def test_criterion_3_soft_floor_sharp_limit():
    t0 = time.perf_counter()
    gamma = 20.0
    rng = np.random.default_rng(3)
    worst_slack = np.inf
    tested = 0
    within_1e3 = 0
    violations = 0
    for count, delta in ((2, 10.0), (4, 25.0), (5, 7.5)):
        u = rng.uniform(0, count * delta, 200_000)
        hard = np.minimum(np.floor(u / delta), count - 1)
        # distance to the nearest interior boundary
        dist = np.abs(u[:, None] - delta * np.arange(1, count)[None, :]).min(axis=1)
        keep = dist >= 0.25 * delta
        soft, _ = soft_floor_axis(u[keep], delta, count, gamma)
        err = np.abs(soft - hard[keep])
        bound = soft_floor_tail_bound(u[keep], delta, count, gamma)
        violations += int(np.sum(err > bound + 1e-15))
        worst_slack = min(worst_slack, float(np.min(bound - err)))
        within_1e3 += int(np.sum(err <= 1e-3))
        tested += int(keep.sum())
    dt = time.perf_counter() - t0
    ok = violations == 0 and dt < 10
    record_criterion(3, ok, f"{tested} points, {violations} above their tail bound, "
                            f"{within_1e3} also within 1e-3, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 4..7: shared suite run

def _gating_ok(records, wlw, band):
    lo, hi = band
    prev = None
    for rec in records:
        if rec["wlw_active"] != (wlw and lo < rec["overflow"] < hi):
            return False, True
        if prev is not None:
            if any(v < prev["lambda"][f] for f, v in rec["lambda"].items()):
                return True, False
            if rec["psi"] != prev["psi"] and not rec["wlw_active"]:
                return False, True
        prev = rec
    return True, True


@pytest.fixture(scope="session")
def suite_runs(tmp_path_factory):
    out = {}
    work = tmp_path_factory.mktemp("suite")
    for p in suite_params("small20"):
        nl = generate_synthetic(p)
        base = build_layout(arch_config_for(nl))
        net = work / f"{nl.name}.net"
        net.write_text(write_netlist(nl))
        for topo in TOPOLOGIES:
            lay = with_topology(base, *topo)
            tag = f"{nl.name}_{topo[0]}x{topo[1]}"
            arch = work / f"{tag}.arch"
            arch.write_text(write_arch(lay))
            for arm in ARMS:
                cfg = FlowConfig(gp=GpConfig(wlw=False)) if arm == "no-wlw" else ablation_config(arm)
                t0 = time.perf_counter()
                res = run_flow(nl, lay, cfg)
                dt = time.perf_counter() - t0
                rep = res.report
                gp_ok = _gating_ok(res.gp.records, cfg.gp.wlw, cfg.gp.wlw_band)
                entry = {
                    "hpwl": rep["hpwl"], "sll": rep["sll"], "violations": rep["violations"],
                    "overflow": rep["gp"]["overflow"], "converged": rep["converged"], "seconds": dt,
                    "lambda_monotone": gp_ok[1], "wlw_gated": gp_ok[0],
                }
                if arm == "full":
                    pl = work / f"{tag}.place"
                    pl.write_text(write_placement(res.x, res.y, nl, lay, res.site, rep["config_hash"], cfg.stages))
                    entry["check_exit"] = main(["check", str(pl), str(net), str(arch),
                                                "--out", str(work / f"{tag}.check.json")])
                out[(nl.name, topo, arm)] = entry
    return out


def test_criterion_4_legality(suite_runs):
    full = {k: v for k, v in suite_runs.items() if k[2] == "full"}
    kinds = {}
    for v in full.values():
        for viol in v["violations"]:
            kinds[viol["kind"]] = kinds.get(viol["kind"], 0) + 1
    checks_ok = sum(1 for v in full.values() if v["check_exit"] == 0)
    minutes = sum(v["seconds"] for v in full.values()) / 60.0
    ok = not kinds and checks_ok == len(full) and minutes < 30
    record_criterion(4, ok, f"{len(full)} full-flow runs, violations {kinds or 'none'}, "
                            f"check exit 0 on {checks_ok}/{len(full)}, {minutes:.1f} min")
    assert ok


def test_criterion_5_stage_ablation(suite_runs):
    parts = []
    ok = True
    for topo in TOPOLOGIES:
        g = {arm: geomean([v["sll"] for k, v in suite_runs.items() if k[1] == topo and k[2] == arm])
             for arm in ("gp", "gp+lg+dp", "full")}
        good = g["full"] <= 1.01 * g["gp+lg+dp"] and g["gp+lg+dp"] <= 1.01 * g["gp"]
        ok &= good
        parts.append(f"{topo[0]}x{topo[1]} gp {g['gp']:.1f} gp+lg+dp {g['gp+lg+dp']:.1f} full {g['full']:.1f}")
    record_criterion(5, ok, "geomean SLL " + "; ".join(parts))
    assert ok


def test_criterion_6_wlw_ablation(suite_runs):
    on = [v for k, v in suite_runs.items() if k[2] == "full"]
    off = [suite_runs[(k[0], k[1], "no-wlw")] for k in suite_runs if k[2] == "full"]
    s_on, s_off = geomean([v["sll"] for v in on]), geomean([v["sll"] for v in off])
    h_on, h_off = geomean([v["hpwl"] for v in on]), geomean([v["hpwl"] for v in off])
    infl = h_on / h_off - 1.0
    ok = s_on <= s_off and infl <= 0.02
    record_criterion(6, ok, f"geomean SLL on {s_on:.1f} off {s_off:.1f} ({100 * (s_on / s_off - 1):+.2f}%), "
                            f"HPWL inflation {100 * infl:+.2f}%")
    assert ok


def test_criterion_7_convergence(suite_runs):
    ok = True
    parts = []
    for topo in TOPOLOGIES:
        runs = [v for k, v in suite_runs.items() if k[1] == topo and k[2] == "full"]
        good = sum(1 for v in runs if v["overflow"] <= 0.10)
        ok &= good >= 18
        parts.append(f"{topo[0]}x{topo[1]} {good}/{len(runs)}")
    lam = all(v["lambda_monotone"] for v in suite_runs.values())
    gate = all(v["wlw_gated"] for v in suite_runs.values())
    ok = ok and lam and gate
    record_criterion(7, ok, f"overflow <= 0.10 on {', '.join(parts)}; lambda monotone {lam}; psi band gating {gate}")
    assert ok


# ---------------------------------------------------------------- 8

def test_criterion_8_cnp_optimality():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    gaps = 0
    feasible = 0
    done = 0
    while done < 500:
        V = int(rng.integers(1, 9))
        R = int(rng.integers(1, 5))
        prob = random_cnp_problem(rng, V, R)
        ref = solve_exhaustive(prob)
        done += 1
        if ref is None:
            try:
                solve_mapping(prob)
                gaps += 1
            except CnpInfeasible:
                pass
            continue
        feasible += 1
        sol = solve_mapping(prob)
        if not sol.optimal or abs(sol.objective - ref.objective) > 1e-9:
            gaps += 1
    dt = time.perf_counter() - t0
    ok = gaps == 0 and dt < 60
    record_criterion(8, ok, f"{done} instances ({feasible} feasible), {gaps} gaps, {dt:.1f}s")
    assert ok


# ---------------------------------------------------------------- 9

def test_criterion_9_determinism(tmp_path):
    assert main(["gen", "--out", str(tmp_path), "--instances", "1500", "--clocks", "8", "--seed", "9",
                 "--name", "det"]) == 0
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        code = main(["place", str(tmp_path / "det.net"), str(tmp_path / "det.arch"), "--seed", "5",
                     "--out", str(d), "--dump-mapping"])
        outs.append((code, d))
    same = {name: (outs[0][1] / name).read_bytes() == (outs[1][1] / name).read_bytes()
            for name in ("placement.txt", "report.json", "gp_trace.jsonl", "mapping.json")}
    ok = all(same.values()) and outs[0][0] == outs[1][0] == 0
    record_criterion(9, ok, "byte-identical " + ", ".join(f"{k} {v}" for k, v in same.items()))
    assert ok


# ---------------------------------------------------------------- 10

def test_criterion_10_incremental_delta():
    t0 = time.perf_counter()
    mismatches = 0
    moves = 0
    for d in range(20):
        rng = np.random.default_rng(10_000 + d)
        topo = TOPOLOGIES[d % 2]
        lay = small_layout(width=20, height=16, cols=topo[0], rows=topo[1], cr_rows=4)
        n = 120
        nl = random_netlist(rng, n, 100, max_pins=8, clocks=4)
        state = IncrementalState(nl, lay, rng.integers(0, 20, n) + 0.5, rng.integers(0, 16, n) + 0.5)
        h, s = state.hpwl(), state.sll()
        for _ in range(500):
            if rng.random() < 0.5:
                # legalization-style relocation
                steps = [(int(rng.integers(0, n)), int(rng.integers(0, 20)), int(rng.integers(0, 16)))]
            else:
                # detailed-placement swap, as two relocations
                a, b = (int(v) for v in rng.choice(n, 2, replace=False))
                sa = (int(state.x[a]), int(state.y[a]))
                sb = (int(state.x[b]), int(state.y[b]))
                steps = [(a, *sb), (b, *sa)]
            for c, sx, sy in steps:
                dH, dS = delta_metrics(state, c, sx, sy)
                state.apply([c], sx + 0.5, sy + 0.5)
                h2, s2 = state.hpwl(), state.sll()
                moves += 1
                if dS != s2 - s or abs(dH - (h2 - h)) > 1e-9 * max(1.0, h):
                    mismatches += 1
                h, s = h2, s2
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and moves >= 10_000
    record_criterion(10, ok, f"{moves} moves, {mismatches} mismatches, {dt:.1f}s")
    assert ok
