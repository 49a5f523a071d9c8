"""Batch front-end: ``slrplace gen | place | check | plot``.

Exit codes: 0 clean, 1 check violations, 2 input errors, 3 non-convergence.
Any option can also be given as an environment variable ``LEAPS_<OPTION>``
(upper case, dashes as underscores), e.g. ``LEAPS_SEED=3``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3

ENV_PREFIX = "LEAPS_"
PLACEMENT_HEADER = "# slrplace placement v1"

logger = logging.getLogger("slrplace")


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _topology(text: str) -> tuple[int, int]:
    try:
        c, r = (int(v) for v in text.lower().split("x"))
    except ValueError as exc:
        raise InputError(f"topology must look like 1x4, got {text!r}") from exc
    if c < 1 or r < 1:
        raise InputError(f"topology must be positive, got {text!r}")
    return c, r


# ---------------------------------------------------------------- file formats

def load_inputs(netlist_path, arch_path, topology: str | None = None):
    from .arch import ArchConfigError, parse_arch, with_topology
    from .netlist import NetlistError, parse_netlist, validate

    try:
        nl = parse_netlist(_read(netlist_path))
    except NetlistError as exc:
        raise InputError(f"{netlist_path}: {exc}") from exc
    try:
        layout = parse_arch(_read(arch_path))
        if topology:
            layout = with_topology(layout, *_topology(topology))
    except ArchConfigError as exc:
        raise InputError(f"{arch_path}: {exc}") from exc
    errors = [d for d in validate(nl, layout) if d.level == "error"]
    if errors:
        raise InputError("; ".join(d.message for d in errors))
    return nl, layout


def write_placement(x, y, nl, layout, site=None, config_hash: str = "", stages=()) -> str:
    """One line per instance ``id x y zx zy slice``; ``-`` when there is no slice."""
    from .arch import slr_indices

    zx, zy = slr_indices(x, y, layout.topology)
    lines = [PLACEMENT_HEADER, f"# design {nl.name}", f"# config {config_hash}",
             f"# stages {','.join(stages)}", "# id x y zx zy slice"]
    for i in range(nl.num_instances):
        s = "-" if site is None else str(int(site[i]))
        lines.append(f"{i} {_fmt(x[i])} {_fmt(y[i])} {int(zx[i])} {int(zy[i])} {s}")
    return "\n".join(lines) + "\n"


def parse_placement(text: str, n: int | None = None) -> dict:
    """Returns {"x", "y", "site", "stages", "config", "design"}; raises InputError."""
    import numpy as np

    lines = text.splitlines()
    if not lines or lines[0].strip() != PLACEMENT_HEADER:
        raise InputError("placement file: missing header line")
    meta = {"stages": (), "config": "", "design": ""}
    rows = {}
    for no, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split(None, 1)
            if parts and parts[0] in ("stages", "config", "design"):
                val = parts[1].strip() if len(parts) > 1 else ""
                meta[parts[0]] = tuple(s for s in val.split(",") if s) if parts[0] == "stages" else val
            continue
        tok = line.split()
        if len(tok) != 6:
            raise InputError(f"placement file line {no}: expected 6 fields, got {len(tok)}")
        try:
            i = int(tok[0])
            rows[i] = (float(tok[1]), float(tok[2]), -1 if tok[5] == "-" else int(tok[5]))
        except ValueError as exc:
            raise InputError(f"placement file line {no}: {exc}") from exc
    count = n if n is not None else len(rows)
    if sorted(rows) != list(range(count)):
        raise InputError(f"placement file: expected instance ids 0..{count - 1}")
    x = np.array([rows[i][0] for i in range(count)])
    y = np.array([rows[i][1] for i in range(count)])
    site = np.array([rows[i][2] for i in range(count)], dtype=np.int64)
    return {"x": x, "y": y, "site": site, **meta}


def read_trace(path) -> list[dict]:
    out = []
    for no, line in enumerate(_read(path).splitlines(), start=1):
        if line.strip():
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise InputError(f"{path} line {no}: {exc.msg}") from exc
    return out


# ---------------------------------------------------------------- commands

def cmd_gen(args) -> int:
    from .arch import build_layout, write_arch
    from .netlist import SyntheticParams, arch_config_for, generate_synthetic, suite_params, write_netlist

    out = Path(args.out)
    cols, rows = _topology(args.topology)
    if args.suite:
        try:
            plist = suite_params(args.suite, args.seed)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    else:
        plist = [SyntheticParams(instances=args.instances, nets=args.nets, mean_pins=args.mean_pins,
                                 clocks=args.clocks, seed=args.seed, name=args.name)]
    out.mkdir(parents=True, exist_ok=True)
    for p in plist:
        try:
            nl = generate_synthetic(p)
            layout = build_layout(arch_config_for(nl, cols=cols, rows=rows, utilization=args.utilization))
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        (out / f"{nl.name}.net").write_text(write_netlist(nl))
        (out / f"{nl.name}.arch").write_text(write_arch(layout))
        print(f"{nl.name}: {nl.num_instances} instances, {len(nl.nets)} nets, {len(nl.clock_nets)} clocks, "
              f"fabric {layout.width}x{layout.height}")
    return EXIT_OK


def _gp_overrides(args):
    from .flow import FlowConfig, ablation_config, normalize_stages
    from .gp import GpConfig
    from .lgdp import DpConfig, LgConfig

    extra = {}
    if args.config:
        try:
            extra = json.loads(_read(args.config))
        except json.JSONDecodeError as exc:
            raise InputError(f"{args.config}: {exc.msg}") from exc
        if not isinstance(extra, dict):
            raise InputError(f"{args.config}: expected a JSON object")

    def build(cls, key, **forced):
        got = dict(extra.get(key, {}))
        names = {f.name for f in fields(cls)}
        bad = set(got) - names
        if bad:
            raise InputError(f"unknown {key} options {sorted(bad)}")
        for k, v in got.items():
            if isinstance(v, list):
                got[k] = tuple(v)
        got.update(forced)
        return cls(**got)

    gp_forced = {"seed": args.seed}
    if args.no_wlw:
        gp_forced["wlw"] = False
    if args.max_iters is not None:
        gp_forced["max_iters"] = args.max_iters
    try:
        stages = normalize_stages(args.stages)
        cfg = FlowConfig(stages=stages, gp=build(GpConfig, "gp", **gp_forced), lg=build(LgConfig, "lg"),
                         dp=build(DpConfig, "dp"))
        return ablation_config(args.sll_aware, cfg)
    except (TypeError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def cmd_place(args) -> int:
    from .lgdp import LegalizationError
    from .flow import run_flow

    if args.seed is None:
        raise InputError("place needs --seed (or LEAPS_SEED)")
    nl, layout = load_inputs(args.netlist, args.arch, args.topology)
    cfg = _gp_overrides(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = run_flow(nl, layout, cfg)
    except LegalizationError as exc:
        _dump_json({"error": str(exc), "report": exc.report}, out / "legalization_failure.json")
        print(f"legalization failed: {exc}", file=sys.stderr)
        return EXIT_VIOLATIONS
    (out / "placement.txt").write_text(write_placement(res.x, res.y, nl, layout, res.site,
                                                       res.report["config_hash"], cfg.stages))
    _dump_json(res.report, out / "report.json")
    with open(out / "gp_trace.jsonl", "w") as fh:
        for rec in res.gp.records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    _dump_json({k: round(v, 6) for k, v in res.timing.items()}, out / "timing.json")
    if res.legal is not None:
        _dump_json(res.legal.audit, out / "audit.json")
    if args.dump_mapping:
        _dump_json({str(i): int(r) for i, r in enumerate(res.mapping.region) if r >= 0}, out / "mapping.json")
    if args.plot:
        from .plot import placement_svg, trace_svg

        (out / "placement.svg").write_text(placement_svg(res.x, res.y, nl, layout))
        (out / "trace.svg").write_text(trace_svg(res.gp.records))
    r = res.report
    print(f"{nl.name}: hpwl {r['hpwl']:.1f} sll {r['sll']} violations {len(r['violations'])} "
          f"converged {r['converged']}")
    if not res.converged:
        return EXIT_NOT_CONVERGED
    return EXIT_VIOLATIONS if r["violations"] else EXIT_OK


def cmd_check(args) -> int:
    import numpy as np

    from .clockmodel import ClockMapping, check_constraints, clock_usage
    from .flow import placement_metrics
    from .lgdp import check_legality

    nl, layout = load_inputs(args.netlist, args.arch, args.topology)
    pl = parse_placement(_read(args.placement), nl.num_instances)
    mapping = None
    if args.mapping:
        try:
            raw = json.loads(_read(args.mapping))
            region = np.full(nl.num_instances, -1, dtype=np.int64)
            for k, v in raw.items():
                region[int(k)] = int(v)
        except (ValueError, IndexError, AttributeError) as exc:
            raise InputError(f"{args.mapping}: {exc}") from exc
        mapping = ClockMapping.from_regions(region, layout)
    legal_stage = "lg" in pl["stages"] or (pl["site"] >= 0).all()
    if legal_stage:
        violations = check_legality(pl["x"], pl["y"], nl, layout, mapping)
    else:
        violations = check_constraints(clock_usage(pl["x"], pl["y"], nl, layout), layout)
    report = {"schema": "slrplace.check/1", **placement_metrics(pl["x"], pl["y"], nl, layout),
              "legal_checks": bool(legal_stage), "violations": violations}
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_VIOLATIONS if violations else EXIT_OK


def cmd_plot(args) -> int:
    from .plot import density_svg, placement_svg, trace_svg

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    did = False
    if args.placement:
        if not (args.netlist and args.arch):
            raise InputError("plotting a placement needs --netlist and --arch")
        nl, layout = load_inputs(args.netlist, args.arch, args.topology)
        pl = parse_placement(_read(args.placement), nl.num_instances)
        (out / "placement.svg").write_text(placement_svg(pl["x"], pl["y"], nl, layout))
        (out / "density.svg").write_text(density_svg(pl["x"], pl["y"], nl, layout))
        did = True
    if args.trace:
        (out / "trace.svg").write_text(trace_svg(read_trace(args.trace)))
        did = True
    if not did:
        raise InputError("nothing to plot; give --placement and/or --trace")
    return EXIT_OK


# ---------------------------------------------------------------- argument handling

def _env_defaults(parser: argparse.ArgumentParser, env=None):
    """Apply LEAPS_* variables as defaults for the matching options."""
    env = os.environ if env is None else env
    for action in parser._actions:
        if not action.option_strings or action.dest in ("help",):
            continue
        raw = env.get(ENV_PREFIX + action.dest.upper())
        if raw is None:
            continue
        if isinstance(action, (argparse._StoreTrueAction,)):
            action.default = raw.strip().lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                action.default = action.type(raw)
            except ValueError:
                raise InputError(f"{ENV_PREFIX}{action.dest.upper()}: bad value {raw!r}")
        else:
            action.default = raw
        action.required = False


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slrplace", description="Multi-die FPGA analytic placement.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate synthetic netlist + arch files")
    g.add_argument("--out", default="designs")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--instances", type=int, default=2000)
    g.add_argument("--nets", type=int, default=None)
    g.add_argument("--mean-pins", type=float, default=3.5)
    g.add_argument("--clocks", type=int, default=8)
    g.add_argument("--name", default=None)
    g.add_argument("--topology", default="1x4")
    g.add_argument("--utilization", type=float, default=0.6)
    g.add_argument("--suite", default=None, help="preset suite name (small20)")
    g.set_defaults(func=cmd_gen)

    pl = sub.add_parser("place", help="run the placement flow")
    pl.add_argument("netlist")
    pl.add_argument("arch")
    pl.add_argument("--out", default="run")
    pl.add_argument("--seed", type=int, default=None)
    pl.add_argument("--stages", default="gp,cnp,lg,dp")
    pl.add_argument("--no-wlw", action="store_true")
    pl.add_argument("--sll-aware", default="full", choices=("gp", "gp+lg+dp", "full"),
                    help="stages whose cost includes SLL (gp: GP only, gp+lg+dp: adds LG/DP scoring, full: adds CNP)")
    pl.add_argument("--topology", default=None)
    pl.add_argument("--threads", type=int, default=1)
    pl.add_argument("--max-iters", type=int, default=None)
    pl.add_argument("--config", default=None, help="JSON file with gp/lg/dp option overrides")
    pl.add_argument("--dump-mapping", action="store_true")
    pl.add_argument("--plot", action="store_true")
    pl.set_defaults(func=cmd_place)

    c = sub.add_parser("check", help="recompute metrics and legality of a placement file")
    c.add_argument("placement")
    c.add_argument("netlist")
    c.add_argument("arch")
    c.add_argument("--topology", default=None)
    c.add_argument("--mapping", default=None)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_check)

    pt = sub.add_parser("plot", help="write SVG plots")
    pt.add_argument("--placement", default=None)
    pt.add_argument("--netlist", default=None)
    pt.add_argument("--arch", default=None)
    pt.add_argument("--topology", default=None)
    pt.add_argument("--trace", default=None, help="gp_trace.jsonl from place")
    pt.add_argument("--out", default="plots")
    pt.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        for action in parser._subparsers._group_actions:
            for sp in action.choices.values():
                _env_defaults(sp)
        _env_defaults(parser)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    threads = getattr(args, "threads", None)
    if threads is not None:
        if threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_INPUT
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(threads))
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
