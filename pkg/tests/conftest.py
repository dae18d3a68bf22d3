"""Shared fixtures: analytic meshes, random watertight hulls, oracle helpers.

Expensive artifacts (the default synthetic template, a clothed fixture) are
session-scoped; everything else is cheap enough to rebuild per test.
"""

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from tightcap import (SynthSpec, TriMesh, generate_synthetic_template,
                      make_clothed_fixture)
from tightcap.mesh import vertex_normals


def icosphere(level: int = 2, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Subdivided icosahedron with vertices projected onto the sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    for _ in range(level):
        cache: dict = {}
        new_faces = []
        vlist = list(verts)

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = vlist[a] + vlist[b]
                m = m / np.linalg.norm(m)
                cache[key] = len(vlist)
                vlist.append(m)
            return cache[key]

        for f in faces:
            a, b, c = (int(x) for x in f)
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(vlist)
        faces = np.array(new_faces, dtype=np.int64)
    m = TriMesh(verts * radius + np.asarray(center, dtype=np.float64), faces)
    m.normals = vertex_normals(m)
    return m


def random_hull_mesh(rng: np.random.Generator, n_points: int = 60,
                     scale: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Watertight convex mesh with outward faces and no unused vertices."""
    pts = rng.standard_normal((n_points, 3)) * scale
    hull = ConvexHull(pts)
    used = np.unique(hull.simplices)
    remap = np.full(len(pts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    verts = pts[used]
    faces = remap[hull.simplices]
    # qhull does not promise winding; orient each face away from the centroid
    cen = verts.mean(axis=0)
    v0, v1, v2 = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    fn = np.cross(v1 - v0, v2 - v0)
    flip = np.sum(fn * (v0 - cen), axis=1) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    m = TriMesh(verts + np.asarray(center, dtype=np.float64), faces)
    m.normals = vertex_normals(m)
    return m


def brute_tightness(vertices, normals, body_v, body_n, cfg):
    """Exhaustive reference for the one-to-many estimator.

    Candidate set per vertex: exact double-cone membership over ALL body
    vertices (half-angle = aperture/2, same comparison arithmetic as the
    library), united with the k nearest by (squared distance, id). The
    weighted mean then uses the same numpy expressions, so results are
    bitwise comparable.
    """
    n = len(vertices)
    out = np.zeros((n, 3))
    fallback = np.zeros(n, dtype=bool)
    half = np.deg2rad(float(cfg.cone_aperture_deg)) / 2.0
    sigma = cfg.kernel_sigma_deg
    for i in range(n):
        v = vertices[i]
        axis = normals[i] / np.linalg.norm(normals[i])
        u = body_v - v
        d2 = (u * u).sum(axis=1)
        nonzero = d2 > 0
        if half >= np.pi / 2:
            cone_ids = np.nonzero(nonzero)[0]
        else:
            inside = nonzero & (np.abs(u @ axis) >= np.cos(half) * np.sqrt(d2))
            cone_ids = np.nonzero(inside)[0]
        order = np.lexsort((np.arange(len(body_v)), d2))
        k = min(cfg.knn_k, len(body_v))
        knn_ids = order[:k]
        ids = np.union1d(cone_ids, knn_ids)
        if ids.size:
            n1, n2 = normals[i], body_n[ids]
            theta = np.degrees(np.arctan2(
                np.linalg.norm(np.cross(n1, n2), axis=-1),
                np.sum(n1 * n2, axis=-1)))
            w = np.exp(-(theta * theta) / (2.0 * sigma * sigma))
            if cfg.normalization == "count":
                denom = float(cone_ids.size + knn_ids.size)
            else:
                denom = float(w.sum())
        if ids.size == 0 or denom <= 1e-12:
            fallback[i] = True
            out[i] = body_v[order[0]] - v
            continue
        diffs = body_v[ids] - v
        out[i] = (w[:, None] * diffs).sum(axis=0) / denom
    return out, fallback


@pytest.fixture(scope="session")
def default_template():
    return generate_synthetic_template()


@pytest.fixture(scope="session")
def clothed_fixture():
    return make_clothed_fixture(upper_offset=0.03, lower_offset=0.03,
                                pose="rest", seed=3)


@pytest.fixture(scope="session")
def small_template():
    # coarser grid: fast enough for per-test rasterization work
    return generate_synthetic_template(SynthSpec(rings_mid=20, segments=36))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
