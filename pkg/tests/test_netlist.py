import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_netlist, random_netlist, small_layout
from slrplace.arch import FIELDS, build_layout
from slrplace.netlist import (
    Instance,
    Net,
    Netlist,
    NetlistError,
    Pin,
    SyntheticParams,
    arch_config_for,
    fanout_distribution,
    generate_synthetic,
    parse_netlist,
    suite_params,
    validate,
    write_netlist,
)


def test_generator_is_deterministic():
    a = write_netlist(generate_synthetic(SyntheticParams(instances=1000, seed=1)))
    b = write_netlist(generate_synthetic(SyntheticParams(instances=1000, seed=1)))
    c = write_netlist(generate_synthetic(SyntheticParams(instances=1000, seed=2)))
    assert a == b
    assert a != c


def test_roundtrip_generated():
    nl = generate_synthetic(SyntheticParams(instances=500, clocks=6, seed=4))
    text = write_netlist(nl)
    back = parse_netlist(text)
    assert back == nl
    assert write_netlist(back) == text


def test_roundtrip_offsets_fixed_and_odd_names():
    insts = (
        Instance(0, "a b%c", {"LUTL": 1.0, "FF": 2.0}),
        Instance(1, "", {"DSP": 1.0}, True, (3.25, 1.0 / 3.0), (2,)),
        Instance(2, "z", {"FF": 0.5}, False, None, (2,)),
    )
    nets = (
        Net(0, (Pin(0, 0.1, -0.2), Pin(1))),
        Net(1, (Pin(2),), 2.5),
        Net(2, (Pin(1), Pin(2)), 1.0, True),
    )
    nl = Netlist(insts, nets, "odd name")
    assert parse_netlist(write_netlist(nl)) == nl


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_roundtrip_random(seed):
    nl = random_netlist(np.random.default_rng(seed), 12, 8, clocks=2)
    assert parse_netlist(write_netlist(nl)) == nl


def test_parse_error_has_line_number():
    text = "# slrplace netlist v1\nNAME x\nINSTANCES\n0 a LUTL\nNETS\n0 1 0 7\nCLOCKS\n"
    with pytest.raises(NetlistError) as exc:
        parse_netlist(text)
    assert "undefined instance 7" in str(exc.value)
    bad = "# slrplace netlist v1\nINSTANCES\n0 a LUTL\n1 b NOPE\n"
    with pytest.raises(NetlistError) as exc:
        parse_netlist(bad)
    assert exc.value.line == 4


def test_clock_consistency_is_checked():
    insts = (Instance(0, "a", {"FF": 1.0}, clocks=(0,)), Instance(1, "b", {"FF": 1.0}))
    with pytest.raises(NetlistError):
        Netlist(insts, (Net(0, (Pin(0), Pin(1)), 1.0, True),))


def test_validate_capacity_and_degenerate_net():
    lay = small_layout(width=20, height=16)
    nl = make_netlist(["DSP"] * 3, [[0, 1], [2]])
    diags = validate(nl, lay)
    codes = {d.code for d in diags}
    assert "capacity" in codes  # no DSP columns at all
    assert "degenerate-net" in codes


def test_fanout_distribution_mean():
    p = fanout_distribution(3.5, 40)
    k = np.arange(len(p))
    assert abs((k * p).sum() - 3.5) < 1e-6
    assert p[:2].sum() == 0 and abs(p.sum() - 1) < 1e-12


def test_generated_clocks_have_members():
    nl = generate_synthetic(SyntheticParams(instances=800, clocks=12, seed=9))
    arr = nl.arrays
    for k in nl.clock_nets:
        assert arr.net_degree[k] >= 2
    kinds = {i.kind for i in nl.instances if i.clocks}
    assert kinds <= {"FF", "DSP", "BRAM"}


def test_too_many_clocks_rejected():
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticParams(instances=100, clocks=40, seed=1))


def test_arch_config_fits_every_region():
    nl = generate_synthetic(SyntheticParams(instances=2000, seed=3))
    lay = build_layout(arch_config_for(nl, cols=1, rows=4))
    assert not [d for d in validate(nl, lay) if d.level == "error"]
    for f in ("LUTL", "FF", "DSP", "BRAM"):
        need = nl.arrays.demand[:, FIELDS.index(f)].sum()
        assert need <= 0.6 * lay.total_capacity(f) + 1e-9
        assert all(lay.region_capacity(r, f) > 0 for r in lay.regions)


def test_suite_preset():
    ps = suite_params("small20")
    assert len(ps) == 20
    assert len({p.name for p in ps}) == 20
    assert min(p.instances for p in ps) == 2000 and max(p.instances for p in ps) == 4000
    with pytest.raises(ValueError):
        suite_params("huge")
