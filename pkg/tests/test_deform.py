import numpy as np
import pytest

from tightcap.deform import (EDState, arap_with_jacobian, bind_points,
                             build_ed_graph, fps_sample, warp_points,
                             warp_with_jacobian)
from tightcap.so3 import exp

from conftest import icosphere


def test_fps_deterministic_and_spread(rng):
    pts = rng.standard_normal((300, 3))
    s1 = fps_sample(pts, 40, seed=2)
    s2 = fps_sample(pts, 40, seed=2)
    assert np.array_equal(s1, s2)
    assert len(np.unique(s1)) == 40
    # farthest-point picks are more spread than random ones
    d_fps = np.linalg.norm(pts[s1][:, None] - pts[s1][None], axis=2)
    d_fps += np.eye(40) * 1e9
    rand = rng.choice(300, 40, replace=False)
    d_rnd = np.linalg.norm(pts[rand][:, None] - pts[rand][None], axis=2)
    d_rnd += np.eye(40) * 1e9
    assert d_fps.min() > d_rnd.min()


def test_bind_weights_form():
    rng = np.random.default_rng(5)
    nodes = rng.standard_normal((30, 3))
    pts = rng.standard_normal((100, 3))
    idx, w = bind_points(nodes, pts, bind_k=4)
    assert idx.shape == (100, 4) and w.shape == (100, 4)
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(w >= 0)
    for p in range(0, 100, 17):
        d = np.linalg.norm(nodes - pts[p], axis=1)
        order = np.argsort(d)
        dmax = d[order[4]]  # distance to the (k+1)-th node
        raw = np.maximum(0.0, 1.0 - d[order[:4]] / dmax) ** 2
        assert np.allclose(np.sort(w[p])[::-1], np.sort(raw / raw.sum())[::-1],
                           atol=1e-12)


def test_identity_state_is_identity_warp():
    sph = icosphere(2, 0.4)
    g = build_ed_graph(sph.vertices, 40)
    state = EDState(rot=np.tile(np.eye(3), (len(g.nodes), 1, 1)),
                    t=np.zeros((len(g.nodes), 3)))
    out = warp_points(g, state)
    assert np.allclose(out, sph.vertices, atol=1e-14)


def test_global_rigid_motion_reproduced_exactly():
    """All nodes sharing one rigid transform must move points rigidly."""
    sph = icosphere(2, 0.4)
    g = build_ed_graph(sph.vertices, 35)
    w = np.array([0.3, -0.2, 0.5])
    R = exp(w)
    trans = np.array([0.1, 0.2, -0.05])
    # node model: p -> R (p - node) + node + t ; choose t so the composite
    # equals the global motion p -> R p + trans for every node
    t = (R @ g.nodes.T).T - g.nodes + trans
    state = EDState(rot=np.tile(R, (len(g.nodes), 1, 1)), t=t)
    out = warp_points(g, state)
    want = (R @ sph.vertices.T).T + trans
    assert np.abs(out - want).max() < 1e-12


def test_warp_jacobian_matches_finite_differences():
    rng = np.random.default_rng(11)
    sph = icosphere(1, 0.5)
    g = build_ed_graph(sph.vertices, 12)
    from tightcap.so3 import exp_many
    base = EDState(rot=exp_many(0.2 * rng.standard_normal((len(g.nodes), 3))),
                   t=0.05 * rng.standard_normal((len(g.nodes), 3)))
    x0 = np.zeros(6 * len(g.nodes))

    pts, J = warp_with_jacobian(g, base, x0)
    J = np.asarray(J.todense())
    eps = 1e-7
    for col in rng.choice(x0.size, 20, replace=False):
        dx = np.zeros_like(x0)
        dx[col] = eps
        plus, _ = warp_with_jacobian(g, base, dx)
        minus, _ = warp_with_jacobian(g, base, -dx)
        num = (plus - minus).ravel() / (2 * eps)
        assert np.abs(J[:, col] - num).max() < 1e-6


def test_arap_zero_for_shared_rigid_motion():
    sph = icosphere(2, 0.4)
    g = build_ed_graph(sph.vertices, 30)
    w = np.array([0.4, 0.1, -0.3])
    R = exp(w)
    t = (R @ g.nodes.T).T - g.nodes + np.array([0.2, 0.0, 0.1])
    base = EDState(rot=np.tile(R, (len(g.nodes), 1, 1)), t=t)
    r, _ = arap_with_jacobian(g, base, np.zeros(6 * len(g.nodes)))
    assert np.abs(r).max() < 1e-12


def test_arap_jacobian_matches_finite_differences():
    rng = np.random.default_rng(7)
    sph = icosphere(1, 0.5)
    g = build_ed_graph(sph.vertices, 10)
    from tightcap.so3 import exp_many
    base = EDState(rot=exp_many(0.3 * rng.standard_normal((len(g.nodes), 3))),
                   t=0.05 * rng.standard_normal((len(g.nodes), 3)))
    x0 = np.zeros(6 * len(g.nodes))
    r0, J = arap_with_jacobian(g, base, x0)
    J = np.asarray(J.todense())
    eps = 1e-7
    for col in rng.choice(x0.size, 20, replace=False):
        dx = np.zeros_like(x0)
        dx[col] = eps
        rp, _ = arap_with_jacobian(g, base, dx)
        rm, _ = arap_with_jacobian(g, base, -dx)
        num = (rp - rm) / (2 * eps)
        assert np.abs(J[:, col] - num).max() < 1e-6


def test_graph_edges_are_directed_pairs():
    sph = icosphere(2, 0.4)
    g = build_ed_graph(sph.vertices, 25)
    pairs = set(map(tuple, g.edges))
    # every directed pair has its reverse
    assert all((b, a) in pairs for a, b in pairs)
    assert all(a != b for a, b in pairs)


def test_node_count_respected():
    sph = icosphere(2, 0.4)
    g = build_ed_graph(sph.vertices, 50)
    assert len(g.nodes) == 50
    with pytest.raises(ValueError):
        build_ed_graph(sph.vertices, 0)
