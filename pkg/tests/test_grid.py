import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from signcem.errors import ConfigurationError
from signcem.grid import build_hierarchy, local_dof_map, oversample, whole_domain


def test_reference_hierarchy():
    g = build_hierarchy(400, 10)
    assert (g.sub_n, g.n_elem, g.H) == (40, 100, 0.1)
    assert g.mu_scale == pytest.approx(2400.0)


def test_coarse_equals_fine():
    g = build_hierarchy(4, 4)
    assert g.sub_n == 1 and g.n_elem == 16


def test_nesting_element_zero():
    g = build_hierarchy(8, 2)
    cells = set(g.element_cells[0].tolist())
    assert cells == {cy * 8 + cx for cy in range(4) for cx in range(4)}
    assert np.all(g.cell_element[g.element_cells[3]] == 3)


@pytest.mark.parametrize("fine,coarse", [(10, 3), (4, 8), (4, 0)])
def test_bad_hierarchy(fine, coarse):
    with pytest.raises(ConfigurationError):
        build_hierarchy(fine, coarse)


def test_oversample_interior_and_corner():
    g = build_hierarchy(40, 10)
    r = oversample(g, 5 * 10 + 5, 2)
    assert len(r) == 25 and r.bbox == (3, 3, 8, 8)
    r0 = oversample(g, 0, 2)
    assert len(r0) == 9 and r0.bbox == (0, 0, 3, 3)


def test_whole_domain_interior():
    g = build_hierarchy(12, 3)
    r = whole_domain(g)
    assert g.n_nodes - len(r.interior_nodes) == 4 * g.fine_n
    np.testing.assert_array_equal(np.sort(r.interior_nodes), g.interior_nodes)


def test_single_element_nodes():
    g = build_hierarchy(8, 2)
    assert len(g.element_nodes[0]) == 25
    assert len(oversample(g, 0, 0).nodes) == 25


def test_boundary_excluded_from_interior():
    g = build_hierarchy(8, 2)
    r = oversample(g, 0, 0)
    assert not np.any(g.boundary_mask[r.interior_nodes])
    assert len(r.interior_nodes) == 9


@settings(max_examples=40, deadline=None)
@given(nc=st.integers(1, 7), s=st.integers(1, 3), data=st.data())
def test_oversample_monotone_and_saturating(nc, s, data):
    g = build_hierarchy(nc * s, nc)
    i = data.draw(st.integers(0, g.n_elem - 1))
    m = data.draw(st.integers(0, nc))
    a, b = set(oversample(g, i, m).nodes), set(oversample(g, i, m + 1).nodes)
    assert a <= b
    full = oversample(g, i, nc)
    assert len(full) == g.n_elem
    assert oversample(g, i, nc + 3).bbox == full.bbox


@pytest.mark.parametrize("m", [0, 1, 2])
def test_center_region_dihedral_symmetry(m):
    g = build_hierarchy(10, 5)
    r = oversample(g, 12, m)
    xy = g.node_coords[r.nodes]
    pts = {tuple(np.round(p, 12)) for p in xy}
    for f in (lambda x, y: (1 - x, y), lambda x, y: (y, x), lambda x, y: (x, 1 - y)):
        assert {tuple(np.round(f(*p), 12)) for p in xy} == pts


@settings(max_examples=30, deadline=None)
@given(nc=st.integers(1, 5), s=st.integers(1, 3), data=st.data())
def test_local_dof_roundtrip(nc, s, data):
    g = build_hierarchy(nc * s, nc)
    i = data.draw(st.integers(0, g.n_elem - 1))
    m = data.draw(st.integers(0, 2))
    dm = local_dof_map(g, oversample(g, i, m))
    loc = np.arange(len(dm))
    np.testing.assert_array_equal(dm.to_local(dm.to_global(loc)), loc)
