"""Netlist hypergraph, text format, validation and the synthetic generator."""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable
from urllib.parse import quote, unquote

import numpy as np
from scipy.spatial import cKDTree

from .arch import FIELDS, FabricLayout

logger = logging.getLogger(__name__)

FIELD_INDEX = {f: i for i, f in enumerate(FIELDS)}
CLOCKED_TYPES = ("FF", "DSP", "BRAM")


class NetlistError(ValueError):
    """Structural problem in a netlist; ``line`` is set for parse errors."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True)
class Pin:
    inst: int
    dx: float = 0.0
    dy: float = 0.0


@dataclass(frozen=True)
class Instance:
    id: int
    name: str
    demand: dict
    fixed: bool = False
    pos: tuple[float, float] | None = None
    clocks: tuple[int, ...] = ()

    @property
    def charge(self) -> float:
        return float(sum(self.demand.values()))

    @property
    def kind(self) -> str:
        """Dominant resource field."""
        return max(self.demand.items(), key=lambda kv: (kv[1], -FIELD_INDEX[kv[0]]))[0]


@dataclass(frozen=True)
class Net:
    id: int
    pins: tuple[Pin, ...]
    weight: float = 1.0
    is_clock: bool = False


@dataclass(frozen=True)
class Diagnostic:
    level: str  # "error" | "warning"
    code: str
    message: str


@dataclass(frozen=True)
class Netlist:
    instances: tuple[Instance, ...]
    nets: tuple[Net, ...]
    name: str = "design"

    def __post_init__(self):
        n = len(self.instances)
        for i, inst in enumerate(self.instances):
            if inst.id != i:
                raise NetlistError(f"instance ids must be dense: position {i} holds id {inst.id}")
            for f, v in inst.demand.items():
                if f not in FIELD_INDEX:
                    raise NetlistError(f"instance {i}: unknown resource field {f!r}")
                if v < 0:
                    raise NetlistError(f"instance {i}: negative demand for {f}")
            if not inst.fixed and not any(v > 0 for v in inst.demand.values()):
                raise NetlistError(f"movable instance {i} has no positive demand")
            if inst.fixed and inst.pos is None:
                raise NetlistError(f"fixed instance {i} has no position")
        clock_members: dict[int, set] = {}
        for j, net in enumerate(self.nets):
            if net.id != j:
                raise NetlistError(f"net ids must be dense: position {j} holds id {net.id}")
            if net.weight < 0:
                raise NetlistError(f"net {j}: negative weight")
            for p in net.pins:
                if not 0 <= p.inst < n:
                    raise NetlistError(f"net {j}: pin references undefined instance {p.inst}")
            if net.is_clock:
                clock_members[j] = {p.inst for p in net.pins}
        for inst in self.instances:
            for k in inst.clocks:
                if k not in clock_members:
                    raise NetlistError(f"instance {inst.id}: CLK {k} is not a clock net")
                if inst.id not in clock_members[k]:
                    raise NetlistError(f"instance {inst.id}: lists CLK {k} but has no pin on it")
        for k, members in clock_members.items():
            for i in members:
                if k not in self.instances[i].clocks:
                    raise NetlistError(f"clock net {k} has a pin on instance {i} which does not list it")

    @property
    def clock_nets(self) -> tuple[int, ...]:
        return tuple(n.id for n in self.nets if n.is_clock)

    @property
    def num_instances(self) -> int:
        return len(self.instances)

    @cached_property
    def arrays(self) -> "NetlistArrays":
        return NetlistArrays.build(self)


@dataclass
class NetlistArrays:
    """Flat CSR views of a netlist for vectorized kernels."""

    pin_inst: np.ndarray
    pin_dx: np.ndarray
    pin_dy: np.ndarray
    net_start: np.ndarray
    net_weight: np.ndarray
    net_is_clock: np.ndarray
    demand: np.ndarray  # (n_inst, |FIELDS|)
    fixed: np.ndarray
    fixed_x: np.ndarray
    fixed_y: np.ndarray
    inst_net_start: np.ndarray
    inst_net: np.ndarray
    inst_pin_count: np.ndarray
    inst_clock: np.ndarray  # first clock net id or -1
    pin_net: np.ndarray = field(default=None)

    @property
    def net_degree(self) -> np.ndarray:
        return np.diff(self.net_start)

    def net_pins(self, e: int) -> slice:
        return slice(self.net_start[e], self.net_start[e + 1])

    def nets_of(self, i: int) -> np.ndarray:
        return self.inst_net[self.inst_net_start[i]:self.inst_net_start[i + 1]]

    @classmethod
    def build(cls, nl: Netlist) -> "NetlistArrays":
        n = len(nl.instances)
        pin_inst, pin_dx, pin_dy, start = [], [], [], [0]
        for net in nl.nets:
            for p in net.pins:
                pin_inst.append(p.inst)
                pin_dx.append(p.dx)
                pin_dy.append(p.dy)
            start.append(len(pin_inst))
        pin_inst = np.asarray(pin_inst, dtype=np.int64)
        net_start = np.asarray(start, dtype=np.int64)
        pin_net = np.repeat(np.arange(len(nl.nets), dtype=np.int64), np.diff(net_start))
        demand = np.zeros((n, len(FIELDS)))
        for inst in nl.instances:
            for f, v in inst.demand.items():
                demand[inst.id, FIELD_INDEX[f]] = v
        fixed = np.array([inst.fixed for inst in nl.instances], dtype=bool)
        fx = np.array([inst.pos[0] if inst.pos else 0.0 for inst in nl.instances])
        fy = np.array([inst.pos[1] if inst.pos else 0.0 for inst in nl.instances])
        # instance -> distinct nets
        pairs = np.unique(np.stack([pin_inst, pin_net], axis=1), axis=0) if len(pin_inst) else np.zeros((0, 2), np.int64)
        counts = np.bincount(pairs[:, 0], minlength=n) if len(pairs) else np.zeros(n, np.int64)
        inst_net_start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        inst_clock = np.array([inst.clocks[0] if inst.clocks else -1 for inst in nl.instances], dtype=np.int64)
        return cls(
            pin_inst=pin_inst,
            pin_dx=np.asarray(pin_dx, dtype=float),
            pin_dy=np.asarray(pin_dy, dtype=float),
            net_start=net_start,
            net_weight=np.array([net.weight for net in nl.nets], dtype=float),
            net_is_clock=np.array([net.is_clock for net in nl.nets], dtype=bool),
            demand=demand,
            fixed=fixed,
            fixed_x=fx,
            fixed_y=fy,
            inst_net_start=inst_net_start,
            inst_net=pairs[:, 1].astype(np.int64) if len(pairs) else np.zeros(0, np.int64),
            inst_pin_count=np.bincount(pin_inst, minlength=n) if len(pin_inst) else np.zeros(n, np.int64),
            inst_clock=inst_clock,
            pin_net=pin_net,
        )


# ---------------------------------------------------------------- text format

def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _name(s: str) -> str:
    # empty names are written as a quoted pair so the line keeps its arity
    return quote(s, safe="") or '""'


def _unname(s: str) -> str:
    return "" if s == '""' else unquote(s)


def _demand_token(demand: dict) -> str:
    items = [(f, v) for f, v in demand.items()]
    if len(items) == 1 and items[0][1] == 1:
        return items[0][0]
    return ",".join(f"{f}:{_fmt(v)}" for f, v in sorted(items, key=lambda kv: FIELD_INDEX[kv[0]]))


def write_netlist(nl: Netlist) -> str:
    out = io.StringIO()
    out.write("# slrplace netlist v1\n")
    out.write(f"NAME {_name(nl.name)}\n")
    out.write("INSTANCES\n")
    for inst in nl.instances:
        parts = [str(inst.id), _name(inst.name), _demand_token(inst.demand)]
        if inst.pos is not None:
            parts += [_fmt(inst.pos[0]), _fmt(inst.pos[1])]
        if inst.fixed:
            parts.append("FIXED")
        if inst.clocks:
            parts.append("CLK")
            parts += [str(k) for k in inst.clocks]
        out.write(" ".join(parts) + "\n")
    out.write("NETS\n")
    for net in nl.nets:
        pins = []
        for p in net.pins:
            pins.append(str(p.inst) if p.dx == 0 and p.dy == 0 else f"{p.inst}:{_fmt(p.dx)}:{_fmt(p.dy)}")
        out.write(" ".join([str(net.id), _fmt(net.weight)] + pins) + "\n")
    out.write("CLOCKS\n")
    clocks = nl.clock_nets
    if clocks:
        out.write(" ".join(str(k) for k in clocks) + "\n")
    return out.getvalue()


def parse_netlist(stream: str | Iterable[str]) -> Netlist:
    """Parse the netlist text format. Raises :class:`NetlistError` with a line number."""
    lines = stream.splitlines() if isinstance(stream, str) else stream
    section = None
    name = "design"
    insts: list[tuple] = []
    nets: list[tuple] = []
    clock_ids: list[tuple[int, int]] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        head = toks[0]
        if head in ("INSTANCES", "NETS", "CLOCKS") and len(toks) == 1:
            section = head
            continue
        if head == "NAME" and section is None:
            if len(toks) != 2:
                raise NetlistError("NAME takes one token", lineno)
            name = _unname(toks[1])
            continue
        if section is None:
            raise NetlistError(f"unexpected content before a section header: {head!r}", lineno)
        try:
            if section == "INSTANCES":
                insts.append((lineno, _parse_instance(toks)))
            elif section == "NETS":
                nets.append((lineno, _parse_net(toks)))
            else:
                clock_ids.extend((lineno, int(t)) for t in toks)
        except NetlistError as exc:
            raise NetlistError(str(exc), lineno) from None
        except ValueError as exc:
            raise NetlistError(f"syntax error: {exc}", lineno) from None

    seen: dict[int, int] = {}
    for lineno, inst in insts:
        if inst["id"] in seen:
            raise NetlistError(f"duplicate instance id {inst['id']}", lineno)
        seen[inst["id"]] = lineno
    n = len(insts)
    for lineno, inst in insts:
        if not 0 <= inst["id"] < n:
            raise NetlistError(f"instance id {inst['id']} not dense in [0, {n})", lineno)
    seen_nets: dict[int, int] = {}
    for lineno, net in nets:
        if net["id"] in seen_nets:
            raise NetlistError(f"duplicate net id {net['id']}", lineno)
        seen_nets[net["id"]] = lineno
        if not 0 <= net["id"] < len(nets):
            raise NetlistError(f"net id {net['id']} not dense in [0, {len(nets)})", lineno)
        for p in net["pins"]:
            if not 0 <= p.inst < n:
                raise NetlistError(f"pin references undefined instance {p.inst}", lineno)
    clock_set = set()
    for lineno, k in clock_ids:
        if k not in seen_nets:
            raise NetlistError(f"CLOCKS references undefined net {k}", lineno)
        clock_set.add(k)
    for lineno, inst in insts:
        for k in inst["clocks"]:
            if k not in clock_set:
                raise NetlistError(f"CLK {k} is not declared in CLOCKS", lineno)

    instances = sorted((inst for _, inst in insts), key=lambda d: d["id"])
    net_objs = sorted((net for _, net in nets), key=lambda d: d["id"])
    try:
        return Netlist(
            instances=tuple(Instance(**d) for d in instances),
            nets=tuple(Net(d["id"], d["pins"], d["weight"], d["id"] in clock_set) for d in net_objs),
            name=name,
        )
    except NetlistError as exc:
        raise NetlistError(str(exc)) from None


def _parse_instance(toks: list[str]) -> dict:
    if len(toks) < 3:
        raise NetlistError("instance line needs: id name type")
    iid = int(toks[0])
    name = _unname(toks[1])
    demand = {}
    for part in toks[2].split(","):
        f, _, amount = part.partition(":")
        if f not in FIELD_INDEX:
            raise NetlistError(f"unknown resource type {f!r}")
        demand[f] = float(amount) if amount else 1.0
    rest = toks[3:]
    pos = None
    if len(rest) >= 2 and _is_number(rest[0]) and _is_number(rest[1]):
        pos = (float(rest[0]), float(rest[1]))
        rest = rest[2:]
    fixed = False
    clocks: list[int] = []
    i = 0
    while i < len(rest):
        t = rest[i]
        if t == "FIXED":
            fixed = True
            i += 1
        elif t == "CLK":
            i += 1
            start = i
            while i < len(rest) and rest[i].lstrip("-").isdigit():
                clocks.append(int(rest[i]))
                i += 1
            if i == start:
                raise NetlistError("CLK needs at least one clock net id")
        else:
            raise NetlistError(f"unexpected token {t!r}")
    if fixed and pos is None:
        raise NetlistError("FIXED instance needs a position")
    return {"id": iid, "name": name, "demand": demand, "fixed": fixed, "pos": pos, "clocks": tuple(clocks)}


def _parse_net(toks: list[str]) -> dict:
    if len(toks) < 2:
        raise NetlistError("net line needs: id weight pins...")
    pins = []
    for t in toks[2:]:
        parts = t.split(":")
        if len(parts) == 1:
            pins.append(Pin(int(parts[0])))
        elif len(parts) == 3:
            pins.append(Pin(int(parts[0]), float(parts[1]), float(parts[2])))
        else:
            raise NetlistError(f"bad pin token {t!r}")
    return {"id": int(toks[0]), "weight": float(toks[1]), "pins": tuple(pins)}


def _is_number(t: str) -> bool:
    try:
        float(t)
    except ValueError:
        return False
    return True


# ---------------------------------------------------------------- validation

def validate(nl: Netlist, layout: FabricLayout) -> list[Diagnostic]:
    diags = []
    arr = nl.arrays
    for k, f in enumerate(FIELDS):
        need = float(arr.demand[:, k].sum())
        have = layout.total_capacity(f)
        if need > have + 1e-9:
            diags.append(Diagnostic("error", "capacity", f"{f} demand {need:g} exceeds capacity {have:g}"))
    for net in nl.nets:
        if len(net.pins) < 2:
            diags.append(Diagnostic("warning", "degenerate-net", f"net {net.id} has {len(net.pins)} pin(s)"))
    for inst in nl.instances:
        if inst.pos is not None and not layout.contains(*inst.pos):
            diags.append(Diagnostic("error", "bounds", f"instance {inst.id} position {inst.pos} outside layout"))
    return diags


# ---------------------------------------------------------------- generator

@dataclass(frozen=True)
class SyntheticParams:
    instances: int = 2000
    nets: int | None = None
    mean_pins: float = 3.5
    max_pins: int = 40
    clocks: int = 8
    mix: tuple[tuple[str, float], ...] = (("LUTL", 0.48), ("FF", 0.48), ("DSP", 0.02), ("BRAM", 0.02))
    clusters: int | None = None
    seed: int = 1
    name: str | None = None
    clock_budget: int | None = None  # max clocks per region x number of regions, when known


def fanout_distribution(mean: float, kmax: int) -> np.ndarray:
    """Truncated power law P(k) ~ k^-a on [2, kmax] with the requested mean.

    Returned array p has p[k] = P(pins == k).
    """
    if not 2.0 <= mean <= kmax:
        raise ValueError(f"mean pins {mean} outside [2, {kmax}]")
    ks = np.arange(2, kmax + 1, dtype=float)

    def mean_for(a):
        w = ks ** -a
        return float((ks * w).sum() / w.sum())

    lo, hi = -5.0, 30.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_for(mid) > mean:
            lo = mid
        else:
            hi = mid
    w = ks ** -(0.5 * (lo + hi))
    p = np.zeros(kmax + 1)
    p[2:] = w / w.sum()
    return p


def generate_synthetic(params: SyntheticParams) -> Netlist:
    """Seeded clustered netlist with locality, Rent-like fanout and clock domains."""
    n = params.instances
    if n < 2:
        raise ValueError("need at least 2 instances")
    m = params.nets if params.nets is not None else n
    if m < 1:
        raise ValueError("need at least 1 net")
    if params.clocks < 0:
        raise ValueError("clock count must be >= 0")
    if params.clock_budget is not None and params.clocks > params.clock_budget:
        raise ValueError(f"{params.clocks} clocks exceed the clock budget {params.clock_budget}")
    rng = np.random.default_rng(params.seed)

    names, fracs = zip(*params.mix)
    fracs = np.asarray(fracs, dtype=float)
    if np.any(fracs < 0) or fracs.sum() <= 0:
        raise ValueError("resource mix must be non-negative with positive sum")
    counts = np.floor(fracs / fracs.sum() * n).astype(int)
    counts[0] += n - counts.sum()
    kinds = np.repeat(np.arange(len(names)), counts)
    rng.shuffle(kinds)

    # clustered virtual positions give the netlist spatial locality
    k_clusters = params.clusters or max(4, n // 150)
    centers = rng.random((k_clusters, 2))
    member = rng.integers(0, k_clusters, size=n)
    spread = 0.6 / math.sqrt(k_clusters)
    pos = np.clip(centers[member] + rng.normal(0, spread, size=(n, 2)), 0, 1)
    tree = cKDTree(pos)

    clocked = np.flatnonzero(np.isin(np.asarray(names)[kinds], CLOCKED_TYPES))
    if params.clocks and params.clocks * 2 > len(clocked):
        raise ValueError(f"{params.clocks} clocks need at least {2 * params.clocks} clocked instances, have {len(clocked)}")

    pmf = fanout_distribution(params.mean_pins, min(params.max_pins, n))
    degree = np.zeros(n)
    drivers = rng.permutation(n)
    net_pins: list[list[int]] = []
    sizes = rng.choice(len(pmf), size=m, p=pmf)
    for j in range(m):
        d = int(drivers[j % n])
        k = int(sizes[j])
        q = min(n, 3 * k + 6)
        _, cand = tree.query(pos[d], k=q)
        cand = np.atleast_1d(cand)
        cand = cand[cand != d]
        w = degree[cand] + 1.0
        sinks = rng.choice(cand, size=min(k - 1, len(cand)), replace=False, p=w / w.sum())
        pins = [d] + [int(s) for s in sinks]
        degree[pins] += 1
        net_pins.append(pins)

    # attach any instance left without a signal net to its nearest neighbour's first net
    inst_nets: dict[int, int] = {}
    for j, pins in enumerate(net_pins):
        for p in pins:
            inst_nets.setdefault(p, j)
    for i in range(n):
        if i not in inst_nets:
            _, nb = tree.query(pos[i], k=min(n, 8))
            for c in np.atleast_1d(nb):
                if int(c) in inst_nets and int(c) != i:
                    j = inst_nets[int(c)]
                    net_pins[j].append(i)
                    inst_nets[i] = j
                    break

    # clock domains: nearest of randomly chosen clocked seeds
    clock_of = np.full(n, -1)
    if params.clocks:
        seeds = rng.choice(clocked, size=params.clocks, replace=False)
        _, owner = cKDTree(pos[seeds]).query(pos[clocked])
        clock_of[clocked] = np.atleast_1d(owner)
        sizes_c = np.bincount(clock_of[clocked], minlength=params.clocks)
        for c in range(params.clocks):
            while sizes_c[c] < 2:
                donor = int(np.argmax(sizes_c))
                cand = clocked[clock_of[clocked] == donor]
                far = cand[np.argmin(np.linalg.norm(pos[cand] - pos[seeds[c]], axis=1))]
                clock_of[far] = c
                sizes_c[donor] -= 1
                sizes_c[c] += 1

    nets = [Net(j, tuple(Pin(p) for p in pins), 1.0, False) for j, pins in enumerate(net_pins)]
    clock_net_id = {}
    for c in range(params.clocks):
        nid = len(nets)
        clock_net_id[c] = nid
        members = np.flatnonzero(clock_of == c)
        nets.append(Net(nid, tuple(Pin(int(i)) for i in members), 1.0, True))
    instances = []
    for i in range(n):
        kind = names[kinds[i]]
        clocks = (clock_net_id[int(clock_of[i])],) if clock_of[i] >= 0 else ()
        instances.append(Instance(i, f"{kind.lower()}_{i}", {kind: 1.0}, False, None, clocks))
    name = params.name or f"syn_s{params.seed}_n{n}"
    return Netlist(tuple(instances), tuple(nets), name)


def arch_config_for(nl: Netlist, cols: int = 1, rows: int = 4, utilization: float = 0.6,
                    cr_cols: int = 5, cr_rows: int = 8, also_fits=((1, 4), (2, 2))) -> dict:
    """Pick a fabric that holds ``nl`` at no more than ``utilization`` in any field.

    Every clock-region column repeats the same pattern: slice columns with
    one SLICEM, one DSP column and one BRAM column, so each clock region
    offers every resource type. Dimensions are chosen so the fabric can also
    be re-split into the topologies listed in ``also_fits``.
    """
    from .arch import DEFAULT_CAPACITY

    demand = nl.arrays.demand.sum(axis=0)
    tops = [(cols, rows)] + [tuple(t) for t in also_fits]
    wq = int(np.lcm.reduce([cr_cols] + [c for c, _ in tops]))
    hq = int(np.lcm.reduce([cr_rows] + [r for _, r in tops]))
    best = None
    for cw in range(4, 41):
        width = cw * cr_cols
        if width % wq:
            continue
        slices = cw - 2
        per_row = {
            "LUTL": cr_cols * slices * DEFAULT_CAPACITY["SLICEL"]["LUTL"],
            "FF": cr_cols * slices * DEFAULT_CAPACITY["SLICEL"]["FF"],
            "DSP": cr_cols * DEFAULT_CAPACITY["DSP"]["DSP"],
            "BRAM": cr_cols * DEFAULT_CAPACITY["BRAM"]["BRAM"],
        }
        rows_needed = max(demand[FIELD_INDEX[f]] / (c * utilization) for f, c in per_row.items())
        height = max(int(math.ceil(rows_needed / hq)) * hq, hq)
        aspect = max(width / height, height / width)
        cand = (round(aspect, 6), width * height, width, height, cw)
        if best is None or cand < best:
            best = cand
    _, _, width, height, cw = best
    base = [c * cw for c in range(cr_cols)]
    return {
        "width": width, "height": height, "cols": cols, "rows": rows,
        "cr_cols": cr_cols, "cr_rows": cr_rows,
        "dsp_columns": [b + cw // 2 - 1 for b in base],
        "bram_columns": [b + cw - 1 for b in base],
        "slicem_columns": [b + 1 for b in base],
    }


SUITES = ("small20",)


def suite_params(name: str = "small20", seed: int = 1) -> list[SyntheticParams]:
    """Named benchmark presets. ``small20``: 20 designs of 2k to 4k instances, 8 to 32 clocks."""
    if name != "small20":
        raise ValueError(f"unknown suite {name!r}; known: {', '.join(SUITES)}")
    out = []
    for i in range(20):
        n = 2000 + (2000 * i) // 19
        out.append(SyntheticParams(instances=n, clocks=(8, 16, 24, 32)[i % 4], seed=seed + i,
                                   name=f"small20_{i:02d}"))
    return out
