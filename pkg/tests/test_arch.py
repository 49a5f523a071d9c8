import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import small_layout
from slrplace.arch import (
    FIELDS,
    SITE_BRAM,
    SITE_DSP,
    ArchConfigError,
    OutOfBoundsError,
    SlrIndex,
    build_layout,
    clock_region_of,
    half_column_indices,
    half_column_of,
    parse_arch,
    slr_index_of,
    slr_indices,
    with_topology,
    write_arch,
)


def test_dimension_mismatch_names_field():
    with pytest.raises(ArchConfigError) as exc:
        build_layout({"width": 21, "height": 16, "cols": 2, "rows": 1})
    assert exc.value.field == "width"
    with pytest.raises(ArchConfigError) as exc:
        build_layout({"width": 20, "height": 15, "cols": 1, "rows": 2})
    assert exc.value.field == "height"


def test_missing_width():
    with pytest.raises(ArchConfigError) as exc:
        build_layout({"height": 16})
    assert exc.value.field == "width"


def test_bad_capacity_field():
    with pytest.raises(ArchConfigError):
        build_layout({"width": 20, "height": 16, "cr_cols": 2, "cr_rows": 4, "capacity": {"DSP": {"NOPE": 1}}})


def test_slr_index_examples():
    lay = small_layout(width=20, height=16, cols=2, rows=2)
    topo = lay.topology
    assert slr_index_of(0.0, 0.0, topo) == SlrIndex(0, 0)
    assert slr_index_of(9.99, 7.99, topo) == SlrIndex(0, 0)
    assert slr_index_of(10.0, 8.0, topo) == SlrIndex(1, 1)
    # the outer edge belongs to the last SLR
    assert slr_index_of(20.0, 16.0, topo) == SlrIndex(1, 1)
    with pytest.raises(OutOfBoundsError):
        slr_index_of(20.5, 1.0, topo)


@given(st.floats(0, 20), st.floats(0, 16))
def test_vectorized_slr_matches_scalar(x, y):
    lay = small_layout(width=20, height=16, cols=2, rows=2)
    zx, zy = slr_indices(np.array([x]), np.array([y]), lay.topology)
    assert (int(zx[0]), int(zy[0])) == tuple(slr_index_of(x, y, lay.topology))


def test_regions_partition_layout():
    lay = small_layout(width=20, height=16, cols=2, rows=2, cr_cols=2, cr_rows=4)
    area = sum((r.box[1] - r.box[0]) * (r.box[3] - r.box[2]) for r in lay.regions)
    assert math.isclose(area, 20 * 16)
    # every site center falls in exactly one region box
    sx, sy = np.meshgrid(np.arange(20) + 0.5, np.arange(16) + 0.5, indexing="ij")
    b = lay.region_boxes
    inside = ((sx.ravel()[:, None] >= b[:, 0]) & (sx.ravel()[:, None] < b[:, 1])
              & (sy.ravel()[:, None] >= b[:, 2]) & (sy.ravel()[:, None] < b[:, 3]))
    assert np.all(inside.sum(axis=1) == 1)


def test_regions_split_at_slr_borders():
    # clock-region rows of height 5 straddle the SLR border at y = 8
    lay = small_layout(width=20, height=20, cols=1, rows=2, cr_cols=2, cr_rows=4)
    for r in lay.regions:
        z = lay.topology
        assert r.box[2] >= r.slr.zy * z.slr_height and r.box[3] <= (r.slr.zy + 1) * z.slr_height


@given(st.floats(0, 20, exclude_max=True), st.floats(0, 16, exclude_max=True))
def test_region_of_contains_point(x, y):
    lay = small_layout(width=20, height=16, cols=2, rows=2)
    reg = lay.region_of(x, y)
    l, r, d, u = reg.box
    assert l <= x < r and d <= y < u
    assert int(lay.region_indices(np.array([x]), np.array([y]))[0]) == reg.index


@given(st.floats(0, 20, exclude_max=True), st.floats(0, 16, exclude_max=True))
def test_half_column_consistency(x, y):
    lay = small_layout(width=20, height=16)
    hc = half_column_of(x, y, lay)
    cr, _ = clock_region_of(x, y, lay)
    assert (hc.cx, hc.cy) == (cr.cx, cr.cy)
    g = lay.cr_grid
    flat = ((hc.cy * g.cr_cols + hc.cx) * g.columns_per_region + hc.col) * 2 + int(hc.upper)
    assert int(half_column_indices(np.array([x]), np.array([y]), lay)[0]) == flat


def test_arch_file_roundtrip():
    lay = small_layout(width=20, height=16, cols=2, rows=1, dsp_columns=[4, 14], bram_columns=[9], slicem_columns=[1])
    back = parse_arch(write_arch(lay))
    assert back.width == lay.width and back.height == lay.height
    assert back.topology == lay.topology
    assert back.cr_grid == lay.cr_grid
    assert back.column_types == lay.column_types
    for f in FIELDS:
        assert back.total_capacity(f) == lay.total_capacity(f)


def test_parse_arch_reports_bad_value():
    text = write_arch(small_layout()).replace("cr_cols = 2", "cr_cols = two")
    with pytest.raises(ArchConfigError) as exc:
        parse_arch(text)
    assert exc.value.field == "clock.cr_cols"


def test_site_kinds_and_capacity():
    lay = small_layout(dsp_columns=[3], bram_columns=[7])
    assert lay.site_kind[3, 0] == SITE_DSP and lay.site_kind[7, 5] == SITE_BRAM
    assert lay.total_capacity("DSP") == 16
    assert lay.total_capacity("LUTL") == 4 * 18 * 16


def test_with_topology_keeps_fabric():
    lay = small_layout(width=20, height=16, cols=1, rows=4, cr_rows=4)
    other = with_topology(lay, 2, 2)
    assert other.topology.num_slrs == 4
    assert other.column_types == lay.column_types
    with pytest.raises(ArchConfigError):
        with_topology(lay, 3, 1)
