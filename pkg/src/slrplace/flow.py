"""Stage sequencing for one placement run and the metrics it reports."""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .arch import FabricLayout, slr_indices
from .clockmodel import ClockMapping, check_constraints, clock_usage
from .gp import GpConfig, GpResult, run_global_placement
from .lgdp import DpConfig, LegalPlacement, LgConfig, check_legality, detailed_place, legalize
from .sll import total_sll
from .wirelength import hpwl

logger = logging.getLogger(__name__)

STAGE_ORDER = ("gp", "cnp", "lg", "dp")
REPORT_SCHEMA = "slrplace.report/1"


def normalize_stages(stages) -> tuple[str, ...]:
    """Canonical stage tuple; flag order does not matter, ``gp`` is always required."""
    if isinstance(stages, str):
        stages = [s for s in stages.replace("+", ",").split(",") if s.strip()]
    got = {s.strip().lower() for s in stages}
    bad = got - set(STAGE_ORDER)
    if bad:
        raise ValueError(f"unknown stages {sorted(bad)}; choose from {', '.join(STAGE_ORDER)}")
    if not got:
        raise ValueError("stage set is empty")
    if "gp" not in got:
        raise ValueError("the gp stage is required; the other stages refine its result")
    if "dp" in got and "lg" not in got:
        raise ValueError("dp needs a legal placement; add lg")
    return tuple(s for s in STAGE_ORDER if s in got)


@dataclass
class FlowConfig:
    stages: tuple[str, ...] = STAGE_ORDER
    gp: GpConfig = field(default_factory=GpConfig)
    lg: LgConfig = field(default_factory=LgConfig)
    dp: DpConfig = field(default_factory=DpConfig)

    def __post_init__(self):
        self.stages = normalize_stages(self.stages)

    def to_dict(self) -> dict:
        return {"stages": list(self.stages), "gp": self.gp.to_dict(), "lg": asdict(self.lg), "dp": asdict(self.dp)}

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# which stages carry an SLL term: "gp" keeps it only in GP, "gp+lg+dp" adds it to
# LG/DP scoring, "full" also adds it to the clock-planning cost
ABLATION_ARMS = ("gp", "gp+lg+dp", "full")


def ablation_config(arm: str, base: FlowConfig | None = None) -> FlowConfig:
    """Full-flow config with SLL awareness limited to the stages named by ``arm``."""
    base = base or FlowConfig()
    if arm not in ABLATION_ARMS:
        raise ValueError(f"unknown ablation arm {arm!r}; choose from {', '.join(ABLATION_ARMS)}")
    alpha_lg = 0.0 if arm == "gp" else base.lg.alpha_lg
    cnp_alpha = base.gp.cnp_alpha if arm == "full" else 0.0
    return FlowConfig(stages=base.stages, gp=replace(base.gp, cnp_alpha=cnp_alpha),
                      lg=replace(base.lg, alpha_lg=alpha_lg), dp=replace(base.dp, alpha_lg=alpha_lg))


@dataclass
class FlowResult:
    x: np.ndarray
    y: np.ndarray
    site: np.ndarray | None
    mapping: ClockMapping
    gp: GpResult
    legal: LegalPlacement | None
    report: dict
    timing: dict
    converged: bool


def placement_metrics(x, y, nl, layout: FabricLayout) -> dict:
    return {"hpwl": float(hpwl(x, y, nl)), "sll": int(total_sll(x, y, nl, layout.topology))}


def run_flow(nl, layout: FabricLayout, config: FlowConfig | None = None) -> FlowResult:
    """GP (with CNP inside its outer loop when enabled), then LG, then DP."""
    cfg = config or FlowConfig()
    n = nl.num_instances
    timing = {}
    stages: dict = {}
    gp_cfg = replace(cfg.gp, cnp="cnp" in cfg.stages)

    t0 = time.perf_counter()
    gp = run_global_placement(nl, layout, gp_cfg)
    timing["gp"] = time.perf_counter() - t0
    x, y = gp.x[:n].copy(), gp.y[:n].copy()
    stages["gp"] = placement_metrics(x, y, nl, layout)
    mapping = gp.mapping if gp_cfg.cnp else ClockMapping.empty(n)

    legal = None
    if "lg" in cfg.stages:
        t0 = time.perf_counter()
        legal = legalize(x, y, mapping, layout, nl, cfg.lg)
        timing["lg"] = time.perf_counter() - t0
        stages["lg"] = placement_metrics(legal.x, legal.y, nl, layout)
    if "dp" in cfg.stages:
        t0 = time.perf_counter()
        legal = detailed_place(legal, nl, layout, cfg.dp)
        timing["dp"] = time.perf_counter() - t0
        stages["dp"] = placement_metrics(legal.x, legal.y, nl, layout)
    if legal is not None:
        x, y = legal.x, legal.y
        violations = check_legality(x, y, nl, layout, mapping if gp_cfg.cnp else None,
                                    gp_cfg.inclusive_clock_usage)
    else:
        usage = clock_usage(x, y, nl, layout, gp_cfg.inclusive_clock_usage)
        violations = check_constraints(usage, layout)

    final = placement_metrics(x, y, nl, layout)
    names = list(stages)
    deltas = {b: {"hpwl": stages[b]["hpwl"] - stages[a]["hpwl"], "sll": stages[b]["sll"] - stages[a]["sll"]}
              for a, b in zip(names, names[1:])}
    report = {
        "schema": REPORT_SCHEMA,
        "design": nl.name,
        "instances": n,
        "topology": [layout.topology.cols, layout.topology.rows],
        "seed": gp_cfg.seed,
        "config_hash": cfg.config_hash(),
        "stages": list(cfg.stages),
        "converged": bool(gp.converged),
        "hpwl": final["hpwl"],
        "sll": final["sll"],
        "per_stage": stages,
        "stage_deltas": deltas,
        "violations": violations,
        "clock_violations": sum(1 for v in violations if v["kind"] in ("cr", "hc")),
        "overflow_trace": [r["overflow"] for r in gp.records],
        "gp": gp.summary,
        "lg": legal.stats if legal is not None else None,
    }
    logger.info("%s: hpwl %.1f sll %d violations %d", nl.name, final["hpwl"], final["sll"], len(violations))
    site = legal.site if legal is not None else None
    return FlowResult(x, y, site, mapping, gp, legal, report, timing, bool(gp.converged))


def slr_of_positions(x, y, layout: FabricLayout):
    return slr_indices(x, y, layout.topology)
