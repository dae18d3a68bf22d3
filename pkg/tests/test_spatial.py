import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tightcap.spatial import SpatialIndex


def brute_knn(points, q, k):
    d2 = ((points - q) ** 2).sum(axis=1)
    order = np.lexsort((np.arange(len(points)), d2))
    return order[:k]


def brute_cone(points, origin, axis, aperture_deg):
    axis = axis / np.linalg.norm(axis)
    half = np.deg2rad(aperture_deg) / 2.0
    u = points - origin
    d = np.linalg.norm(u, axis=1)
    ok = d > 0
    cos = np.zeros(len(points))
    cos[ok] = np.abs(u[ok] @ axis) / d[ok]
    return np.nonzero(ok & (cos >= np.cos(half) - 1e-12))[0]


def test_validation():
    with pytest.raises(ValueError):
        SpatialIndex(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        SpatialIndex(np.zeros((5, 2)))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 99_999), k=st.integers(1, 12))
def test_knn_matches_brute_force(seed, k):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((60, 3))
    idx = SpatialIndex(pts)
    q = rng.standard_normal(3)
    assert np.array_equal(idx.knn_query(q, k), brute_knn(pts, q, k))


def test_knn_breaks_ties_by_lower_id():
    # four points at identical distance from the origin
    pts = np.array([[1., 0, 0], [0, 1., 0], [-1., 0, 0], [0, -1., 0],
                    [5., 5, 5]])
    idx = SpatialIndex(pts)
    assert np.array_equal(idx.knn_query(np.zeros(3), 2), [0, 1])
    assert np.array_equal(idx.knn_query(np.zeros(3), 4), [0, 1, 2, 3])


def test_knn_clamps_k():
    pts = np.eye(3)
    assert len(SpatialIndex(pts).knn_query(np.zeros(3), 50)) == 3


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 99_999), ap=st.floats(5.0, 170.0))
def test_cone_matches_brute_force(seed, ap):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((80, 3))
    origin = rng.standard_normal(3) * 0.2
    axis = rng.standard_normal(3)
    got = SpatialIndex(pts).cone_query(origin, axis, ap)
    want = brute_cone(pts, origin, axis, ap)
    # tolerance guard in the brute can only ADD boundary points
    assert set(got) <= set(want)
    strict = brute_cone(pts, origin, axis, ap * (1 - 1e-9))
    assert set(strict) <= set(got)


def test_cone_excludes_coincident_point():
    pts = np.array([[0., 0, 0], [0, 0, 1.]])
    ids = SpatialIndex(pts).cone_query(np.zeros(3), np.array([0., 0, 1]), 30)
    assert np.array_equal(ids, [1])


def test_cone_wide_aperture_covers_everything():
    rng = np.random.default_rng(3)
    pts = rng.standard_normal((50, 3))
    ids = SpatialIndex(pts).cone_query(pts[7], np.array([1., 0, 0]), 360.0)
    assert len(ids) == 49  # all but the coincident point


def test_cone_zero_axis_rejected():
    with pytest.raises(ValueError):
        SpatialIndex(np.eye(3)).cone_query(np.zeros(3), np.zeros(3), 30)


def test_nearest_batched_and_bounded():
    pts = np.array([[0., 0, 0], [10., 0, 0]])
    idx = SpatialIndex(pts)
    d, i = idx.nearest(np.array([[1., 0, 0], [9., 0, 0]]))
    assert np.allclose(d[:, 0], [1., 1.]) and np.array_equal(i[:, 0], [0, 1])
    d, i = idx.nearest(np.array([[4., 0, 0]]), max_distance=1.0)
    assert np.isinf(d[0, 0]) and i[0, 0] == len(pts)
