import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskseg import (
    GRID_NEIGHBORHOOD,
    AffinityNeighborhood,
    Coord3,
    LabelVolume,
    MaskWindow,
    Scale,
    SignedGridGraph,
    ValidationError,
    edge_count,
    enumerate_edges,
)
from maskseg.core import edge_arrays, source_slices


def test_coord_arithmetic_is_exact():
    a = Coord3(1, -2, 3)
    b = Coord3(4, 5, -6)
    assert a + b == Coord3(5, 3, -3)
    assert a - b == Coord3(-3, -7, 9)
    assert -a == Coord3(-1, 2, -3)
    assert a.scaled(Scale(4, 4, 1)) == Coord3(4, -8, 3)


def test_window_validation_and_indexing():
    w = MaskWindow(7, 7, 5).validate()
    assert w.half == Coord3(3, 3, 2)
    assert w.size == 245
    assert w.flat_index(Coord3(0, 0, 0)) == (2 * 7 + 3) * 7 + 3
    with pytest.raises(ValidationError):
        MaskWindow(4, 3, 3).validate()
    with pytest.raises(ValidationError):
        w.flat_index(Coord3(4, 0, 0))


def test_neighborhood_preset_matches_expected_offsets():
    offs = GRID_NEIGHBORHOOD.offsets
    assert len(offs) == 16
    assert GRID_NEIGHBORHOOD.direct_count == 3
    assert offs[:3] == (Coord3(0, 0, -1), Coord3(-1, 0, 0), Coord3(0, -1, 0))
    assert Coord3(-12, 0, 0) in offs and Coord3(8, -8, 0) in offs
    assert len(set(offs)) == 16


def test_neighborhood_rejects_duplicates_and_zero():
    with pytest.raises(ValidationError):
        AffinityNeighborhood((Coord3(1, 0, 0), Coord3(1, 0, 0)), 1)
    with pytest.raises(ValidationError):
        AffinityNeighborhood((Coord3(0, 0, 0),), 0)


def test_enumerate_edges_single_offset_pair():
    nb = AffinityNeighborhood((Coord3(-1, 0, 0),), 1)
    edges = list(enumerate_edges((2, 1, 1), nb))
    assert edges == [(Coord3(1, 0, 0), 0)]


def test_enumerate_edges_all_offsets_leave_bounds():
    assert list(enumerate_edges((1, 1, 1), GRID_NEIGHBORHOOD)) == []


def test_enumerate_edges_z_offset_count():
    nb = AffinityNeighborhood((Coord3(0, 0, -1),), 1)
    edges = list(enumerate_edges((10, 10, 5), nb))
    assert len(edges) == 10 * 10 * 4


def test_enumerate_edges_order_is_zyxk():
    nb = AffinityNeighborhood((Coord3(-1, 0, 0), Coord3(0, -1, 0)), 2)
    edges = list(enumerate_edges((2, 2, 2), nb))
    keys = [(u.z, u.y, u.x, k) for u, k in edges]
    assert keys == sorted(keys)


@settings(max_examples=40, deadline=None)
@given(
    shape=st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 4)),
    offsets=st.lists(
        st.tuples(st.integers(-3, 3), st.integers(-3, 3), st.integers(-2, 2)).filter(
            lambda o: o != (0, 0, 0)
        ),
        min_size=1,
        max_size=4,
        unique=True,
    ),
)
def test_edge_count_matches_direct_counting(shape, offsets):
    nb = AffinityNeighborhood(tuple(Coord3(*o) for o in offsets), 1)
    edges = list(enumerate_edges(shape, nb))
    expected = 0
    for o in nb.offsets:
        expected += max(0, shape[0] - abs(o.x)) * max(0, shape[1] - abs(o.y)) * max(0, shape[2] - abs(o.z))
    assert len(edges) == expected == edge_count(shape, nb)
    # the vectorized enumeration agrees pairwise
    u_flat, k_arr = edge_arrays(shape, nb)
    x, y, _ = shape
    flat = [((u.z * y + u.y) * x + u.x, k) for u, k in edges]
    assert flat == list(zip(u_flat.tolist(), k_arr.tolist()))


def test_source_slices_match_offset_bounds():
    sl = source_slices((5, 4, 3), Coord3(-2, 1, 0))
    assert sl == (slice(0, 3), slice(0, 3), slice(2, 5))
    assert source_slices((2, 2, 2), Coord3(0, 0, -2)) is None


def test_label_volume_validation():
    with pytest.raises(ValidationError):
        LabelVolume(np.zeros((2, 2), dtype=np.uint32))
    with pytest.raises(ValidationError):
        LabelVolume(np.zeros((2, 2, 2), dtype=np.int32))
    vol = LabelVolume(np.ones((3, 2, 4), dtype=np.uint32))
    assert vol.shape_xyz == (4, 2, 3)


def test_signed_graph_field_bounds_enforced():
    nb = AffinityNeighborhood((Coord3(-1, 0, 0),), 1)
    shape = (2, 1, 1)
    ok = np.zeros((1, 1, 1, 2))
    mean = ok.copy()
    mean[0, 0, 0, 1] = 0.7
    var = ok.copy()
    ev = ok.copy()
    ev[0, 0, 0, 1] = 2.0
    g = SignedGridGraph(shape, nb, mean, var, ev)
    assert g.valid[0, 0, 0, 1] and not g.valid[0, 0, 0, 0]

    bad_mean = mean.copy()
    bad_mean[0, 0, 0, 1] = 1.5
    with pytest.raises(ValidationError):
        SignedGridGraph(shape, nb, bad_mean, var, ev)
    bad_var = var.copy()
    bad_var[0, 0, 0, 1] = 0.3
    with pytest.raises(ValidationError):
        SignedGridGraph(shape, nb, mean, bad_var, ev)
    with pytest.raises(ValidationError):
        SignedGridGraph(shape, nb, mean, var, -ev)
