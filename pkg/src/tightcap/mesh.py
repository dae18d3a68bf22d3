"""Triangle mesh container and base geometry ops.

The mesh is a plain indexed triangle soup: float64 vertex positions, int
faces, optional per-vertex RGB colors in [0, 1] and optional unit normals.
Everything downstream (registration, geometry images, tightness) works on
this one container.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np


class MeshError(ValueError):
    """Raised for invalid mesh data (bad indices, malformed fields)."""


@dataclass
class TriMesh:
    vertices: np.ndarray                    # (n, 3) float64
    faces: np.ndarray                       # (m, 3) int64, indices into vertices
    colors: Optional[np.ndarray] = None     # (n, 3) float64 in [0, 1]
    normals: Optional[np.ndarray] = None    # (n, 3) float64, unit where defined

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {self.vertices.shape}")
        if not np.isfinite(self.vertices).all():
            raise MeshError("vertex positions must be finite")
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.faces.size == 0:
            self.faces = self.faces.reshape(0, 3)
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError(f"faces must be (m, 3), got {self.faces.shape}")
        n = len(self.vertices)
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= n:
                bad = int(np.argmax((self.faces < 0) | (self.faces >= n)).item())
                raise MeshError(
                    f"face index out of range (face {bad // 3}, {n} vertices)")
            same = (
                (self.faces[:, 0] == self.faces[:, 1])
                | (self.faces[:, 1] == self.faces[:, 2])
                | (self.faces[:, 0] == self.faces[:, 2])
            )
            if same.any():
                raise MeshError(
                    f"face {int(np.argmax(same))} references a vertex twice")
        if self.colors is not None:
            self.colors = np.ascontiguousarray(self.colors, dtype=np.float64)
            if self.colors.shape != (n, 3):
                raise MeshError(f"colors must be ({n}, 3), got {self.colors.shape}")
        if self.normals is not None:
            self.normals = np.ascontiguousarray(self.normals, dtype=np.float64)
            if self.normals.shape != (n, 3):
                raise MeshError(f"normals must be ({n}, 3), got {self.normals.shape}")
            norms = np.linalg.norm(self.normals, axis=1)
            defined = norms > 0.5  # zero vectors flag undefined normals
            if defined.any() and np.abs(norms[defined] - 1.0).max() > 1e-6:
                raise MeshError("normals must be unit length within 1e-6")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n_vertices == 0:
            raise MeshError("bbox of empty mesh")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def bbox_diagonal(self) -> float:
        lo, hi = self.bbox
        return float(np.linalg.norm(hi - lo))

    def colors_or_gray(self) -> np.ndarray:
        """Per-vertex colors; meshes without colors read as mid-gray 0.5."""
        if self.colors is not None:
            return self.colors
        return np.full((self.n_vertices, 3), 0.5)

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        """Copy of the mesh with replaced positions (normals dropped)."""
        return replace(self, vertices=np.asarray(vertices, dtype=np.float64),
                       normals=None)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as a (e, 2) sorted-index array."""
        return unique_edges(self.faces)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges()) + self.n_faces


def unique_edges(faces: np.ndarray) -> np.ndarray:
    if len(faces) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


def face_normals_areas(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """Unit face normals and face areas; degenerate faces get zero normal."""
    v = mesh.vertices
    f = mesh.faces
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    twice_area = np.linalg.norm(cross, axis=1)
    normals = np.zeros_like(cross)
    ok = twice_area > 0
    normals[ok] = cross[ok] / twice_area[ok, None]
    return normals, 0.5 * twice_area


def vertex_normals(mesh: TriMesh, with_flags: bool = False):
    """Area-weighted per-vertex unit normals.

    Vertices with no incident face, or only degenerate (zero-area) incident
    faces, get an exact zero vector; `with_flags=True` additionally returns
    the boolean validity mask so callers can tell those apart from real
    normals instead of treating them as silently valid.
    """
    v = mesh.vertices
    f = mesh.faces
    # unnormalized cross product = 2*area * unit normal, so plain
    # accumulation is exactly the area weighting
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    acc = np.zeros_like(v)
    for k in range(3):
        np.add.at(acc, f[:, k], cross)
    norms = np.linalg.norm(acc, axis=1)
    out = np.zeros_like(acc)
    valid = norms > 1e-20
    out[valid] = acc[valid] / norms[valid, None]
    if with_flags:
        return out, valid
    return out


def vertex_adjacency(mesh: TriMesh) -> list[np.ndarray]:
    """Per-vertex sorted arrays of 1-ring neighbor indices."""
    e = mesh.edges()
    nbr: list[list[int]] = [[] for _ in range(mesh.n_vertices)]
    for a, b in e:
        nbr[a].append(int(b))
        nbr[b].append(int(a))
    return [np.array(sorted(x), dtype=np.int64) for x in nbr]


def two_ring_adjacency(mesh: TriMesh) -> list[np.ndarray]:
    """Per-vertex sorted neighbor arrays out to graph distance 2 (self excluded)."""
    one = vertex_adjacency(mesh)
    out = []
    for i, nb in enumerate(one):
        s = set(nb.tolist())
        for j in nb:
            s.update(one[j].tolist())
        s.discard(i)
        out.append(np.array(sorted(s), dtype=np.int64))
    return out


def subdivide_mesh(mesh: TriMesh) -> TriMesh:
    """One round of midpoint (1-to-4) subdivision; colors interpolate."""
    v = mesh.vertices
    f = mesh.faces
    pairs = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]),
                    axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    mid = 0.5 * (v[edges[:, 0]] + v[edges[:, 1]])
    mid_ids = mesh.n_vertices + np.arange(len(edges))
    e01, e12, e20 = (mid_ids[inverse[k * mesh.n_faces:(k + 1) * mesh.n_faces]]
                     for k in range(3))
    faces = np.concatenate([
        np.stack([f[:, 0], e01, e20], axis=1),
        np.stack([f[:, 1], e12, e01], axis=1),
        np.stack([f[:, 2], e20, e12], axis=1),
        np.stack([e01, e12, e20], axis=1),
    ])
    colors = None
    if mesh.colors is not None:
        colors = np.concatenate([
            mesh.colors,
            0.5 * (mesh.colors[edges[:, 0]] + mesh.colors[edges[:, 1]]),
        ])
    return TriMesh(vertices=np.concatenate([v, mid]), faces=faces,
                   colors=colors)
