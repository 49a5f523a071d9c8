import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from slrplace.arch import build_layout
from slrplace.netlist import Instance, Net, Netlist, Pin

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def small_layout(width=20, height=16, cols=1, rows=2, cr_cols=2, cr_rows=4, **extra):
    cfg = {"width": width, "height": height, "cols": cols, "rows": rows, "cr_cols": cr_cols, "cr_rows": cr_rows}
    cfg.update(extra)
    return build_layout(cfg)


def make_netlist(kinds, nets, clocks=None, fixed=None, name="t"):
    """kinds: list of field names; nets: list of instance lists; clocks: {clock: [instances]}."""
    clocks = clocks or {}
    fixed = fixed or {}
    all_nets = [Net(j, tuple(Pin(i) for i in pins)) for j, pins in enumerate(nets)]
    of = {}
    for c, members in clocks.items():
        nid = len(all_nets)
        all_nets.append(Net(nid, tuple(Pin(i) for i in members), 1.0, True))
        for i in members:
            of.setdefault(i, []).append(nid)
    insts = []
    for i, k in enumerate(kinds):
        pos = fixed.get(i)
        insts.append(Instance(i, f"i{i}", {k: 1.0}, pos is not None, pos, tuple(of.get(i, ()))))
    return Netlist(tuple(insts), tuple(all_nets), name)


def random_netlist(rng, n, m, max_pins=5, kinds=("LUTL", "FF"), clocks=0):
    k = [kinds[int(v)] for v in rng.integers(0, len(kinds), n)]
    nets = []
    for _ in range(m):
        d = int(rng.integers(2, max_pins + 1))
        nets.append(sorted(set(int(v) for v in rng.choice(n, size=min(d, n), replace=False))))
    cl = {}
    if clocks:
        owner = rng.integers(0, clocks, n)
        for c in range(clocks):
            mem = [int(i) for i in np.flatnonzero(owner == c)]
            if len(mem) >= 1:
                cl[c] = mem
    return make_netlist(k, nets, cl)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_cnp_problem(rng, V, R, clocks=3, max_clocks=2):
    """Small random mapping problem with binding capacity and clock budgets."""
    from slrplace.arch import FIELDS
    from slrplace.cnp import CnpProblem

    cost = rng.uniform(0, 10, (V, R)).round(2)
    demand = np.zeros((V, len(FIELDS)))
    demand[:, 0] = rng.integers(1, 4, V)
    capacity = np.zeros((R, len(FIELDS)))
    capacity[:, 0] = rng.integers(2, 7, R)
    cells = np.array([(r % 2, r // 2, 0) for r in range(R)], dtype=np.int64).reshape(-1, 3)
    item_clocks = [tuple(sorted(set(int(c) for c in rng.integers(0, clocks, int(rng.integers(1, 3)))))) for _ in range(V)]
    return CnpProblem(cost=cost, demand=demand, capacity=capacity, clocks=item_clocks, region_cell=cells,
                      max_clocks=max_clocks, members=[np.array([v]) for v in range(V)])


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict = {}


def record_criterion(number: int, ok: bool, detail: str):
    ACCEPTANCE[number] = (bool(ok), detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
