import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_netlist, random_netlist
from slrplace.arch import SlrTopology
from slrplace.wirelength import (
    WirelengthModel,
    WlParams,
    hpwl,
    soft_floor_axis,
    soft_floor_tail_bound,
    soft_floor_z,
    total_wl_objective,
    wa_wirelength_xy,
)

TOPO = SlrTopology(2, 2, 10.0, 8.0)


def central_diff(f, x, y, i, axis, h=1e-6):
    xp, yp, xm, ym = x.copy(), y.copy(), x.copy(), y.copy()
    if axis == 0:
        xp[i] += h
        xm[i] -= h
    else:
        yp[i] += h
        ym[i] -= h
    return (f(xp, yp) - f(xm, ym)) / (2 * h)


def test_hpwl_example():
    nl = make_netlist(["LUTL"] * 3, [[0, 1, 2], [0, 1]])
    x = np.array([0.0, 3.0, 1.0])
    y = np.array([0.0, 1.0, 4.0])
    assert hpwl(x, y, nl) == pytest.approx((3 + 4) + (3 + 1))


def test_clock_and_single_pin_nets_ignored():
    nl = make_netlist(["FF"] * 3, [[0, 1], [2]], clocks={0: [0, 2]})
    x = np.array([0.0, 1.0, 9.0])
    y = np.zeros(3)
    assert hpwl(x, y, nl) == pytest.approx(1.0)


def test_wa_bounded_by_hpwl_and_converges(rng):
    nl = random_netlist(rng, 30, 25)
    x = rng.uniform(0, 20, 30)
    y = rng.uniform(0, 16, 30)
    h = hpwl(x, y, nl)
    prev = None
    for g in (4.0, 1.0, 0.25, 0.01):
        v, _, _ = wa_wirelength_xy(x, y, nl, g)
        assert v <= h + 1e-9
        if prev is not None:
            assert v >= prev - 1e-9
        prev = v
    assert prev == pytest.approx(h, rel=1e-3)


def test_wa_translation_invariant(rng):
    nl = random_netlist(rng, 20, 15)
    x = rng.uniform(0, 20, 20)
    y = rng.uniform(0, 16, 20)
    a = wa_wirelength_xy(x, y, nl, 0.7)[0]
    b = wa_wirelength_xy(x + 3.0, y - 2.0, nl, 0.7)[0]
    assert a == pytest.approx(b, rel=1e-12)


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.floats(0.2, 3.0), st.floats(1.0, 20.0), st.floats(0.0, 2.0))
def test_objective_gradient_fd(seed, gamma_h, gamma_s, psi):
    rng = np.random.default_rng(seed)
    nl = random_netlist(rng, 12, 10)
    x = rng.uniform(0.5, 19.5, 12)
    y = rng.uniform(0.5, 15.5, 12)
    wm = WirelengthModel(nl, TOPO)
    p = WlParams(gamma_h, gamma_s, psi)
    ev = wm.evaluate(x, y, p)
    f = lambda a, b: wm.evaluate(a, b, p).value
    for i in range(12):
        for axis, g in ((0, ev.grad_x), (1, ev.grad_y)):
            fd = central_diff(f, x, y, i, axis)
            assert abs(fd - g[i]) <= 1e-4 * max(1.0, abs(fd))


def test_fixed_instances_have_no_gradient():
    nl = make_netlist(["LUTL", "LUTL"], [[0, 1]], fixed={1: (5.0, 5.0)})
    ev = total_wl_objective(np.array([1.0, 5.0]), np.array([1.0, 5.0]), nl, TOPO, WlParams(1.0, 5.0, 1.0))
    assert ev.grad_x[1] == 0 and ev.grad_y[1] == 0
    assert ev.grad_x[0] < 0


def test_soft_floor_limits():
    u = np.array([0.5, 4.0, 6.0, 9.0, 16.0, 19.5])
    z, _ = soft_floor_axis(u, 5.0, 4, 200.0)
    assert np.allclose(z, np.floor(u / 5.0), atol=1e-6)
    # exactly halfway at a boundary, whatever the sharpness
    z, _ = soft_floor_axis(np.array([5.0, 10.0, 15.0]), 5.0, 4, 50.0)
    assert np.allclose(z, [0.5, 1.5, 2.5], atol=1e-9)


def test_single_slr_axis_is_zero():
    z, dz = soft_floor_axis(np.array([3.0, 7.0]), 10.0, 1, 20.0)
    assert np.all(z == 0) and np.all(dz == 0)


@given(st.floats(0.0, 40.0), st.floats(1.0, 30.0))
def test_soft_floor_monotone_and_bounded(u, gamma):
    z, dz = soft_floor_axis(np.array([u, u + 0.5]), 10.0, 4, gamma)
    assert 0.0 <= z[0] <= 3.0 and dz[0] >= 0
    assert z[1] >= z[0]


@given(st.floats(0.0, 40.0), st.floats(1.0, 30.0))
def test_tail_bound_holds(u, gamma):
    z, _ = soft_floor_axis(np.array([u]), 10.0, 4, gamma)
    hard = min(np.floor(u / 10.0), 3)
    bound = soft_floor_tail_bound(np.array([u]), 10.0, 4, gamma)
    assert abs(z[0] - hard) <= bound[0] + 1e-12


def test_soft_floor_z_derivative():
    x = np.array([3.0, 9.7, 10.4])
    y = np.array([7.5, 8.2, 1.0])
    zx, zy, dzx, dzy = soft_floor_z(x, y, TOPO, 6.0)
    h = 1e-6
    zx2, zy2, _, _ = soft_floor_z(x + h, y + h, TOPO, 6.0)
    assert np.allclose((zx2 - zx) / h, dzx, rtol=1e-4, atol=1e-6)
    assert np.allclose((zy2 - zy) / h, dzy, rtol=1e-4, atol=1e-6)


def test_params_validated():
    with pytest.raises(ValueError):
        WlParams(0.0, 1.0)
    with pytest.raises(ValueError):
        WlParams(1.0, 1.0, -0.1)
