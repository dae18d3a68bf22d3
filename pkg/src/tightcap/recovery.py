"""Inner-body recovery, garment segmentation, and cloth retargeting.

Recovery treats the clothed layer plus tightness field as a noisy body
observation and solves one linear least-squares system balancing data fit,
neighborhood smoothing, and proximity to the early-warp prior.
Segmentation is a three-label Potts MRF on the template graph solved by
iterated conditional modes. Retargeting re-attaches per-vertex clothing
offsets onto another body through local tangent-frame rotations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .geomimage import inverse_gi
from .mesh import TriMesh, two_ring_adjacency, unique_edges, vertex_normals
from .template import SkinnedTemplate
from .tightness import PredictionOutput, TightnessField

LABEL_NAMES = ("body", "upper", "lower")


@dataclass
class RecoveryConfig:
    lambda_fit: float = 1.0
    lambda_smooth: float = 0.1
    lambda_reg: float = 0.05
    kernel_sigma: Optional[float] = None   # default: mean edge length

    def __post_init__(self):
        for name in ("lambda_fit", "lambda_smooth", "lambda_reg"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")


def recover_direct(m_v: np.ndarray, field: TightnessField) -> np.ndarray:
    """Straight per-vertex addition of the tightness field."""
    m_v = np.asarray(m_v, dtype=np.float64)
    if m_v.shape != field.vectors.shape:
        raise ValueError(
            f"layer shape {m_v.shape} != field shape {field.vectors.shape}")
    return m_v + field.vectors


def smoothing_operator(vertices: np.ndarray, mesh: TriMesh,
                       sigma: Optional[float] = None) -> sp.csr_matrix:
    """Row-stochastic Gaussian over two-ring neighborhoods (self excluded)."""
    vertices = np.asarray(vertices, dtype=np.float64)
    if sigma is None:
        edges = unique_edges(mesh.faces)
        sigma = float(np.linalg.norm(
            vertices[edges[:, 0]] - vertices[edges[:, 1]], axis=1).mean())
    if sigma <= 0.0:
        raise ValueError("smoothing sigma must be > 0")
    neighborhoods = two_ring_adjacency(mesh)
    rows, cols, vals = [], [], []
    for i, nbrs in enumerate(neighborhoods):
        if len(nbrs) == 0:
            rows.append(i)
            cols.append(i)
            vals.append(1.0)
            continue
        d2 = np.sum((vertices[nbrs] - vertices[i]) ** 2, axis=1)
        w = np.exp(-d2 / (2.0 * sigma * sigma))
        total = w.sum()
        if total <= 1e-300:
            w = np.full(len(nbrs), 1.0 / len(nbrs))
            total = 1.0
        rows.extend([i] * len(nbrs))
        cols.extend(nbrs)
        vals.extend(w / total)
    n = len(vertices)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def recover_shape(m_v: np.ndarray, field: TightnessField, m_warp: np.ndarray,
                  mesh: TriMesh,
                  cfg: Optional[RecoveryConfig] = None) -> np.ndarray:
    """Least-squares body estimate from clothed layer + tightness field.

    Minimizes lf*|m_v + T - M|^2 + ls*|M - K M|^2 + lr*|M - m_warp|^2 over M;
    the system is linear so one sparse factorization serves all coordinates.
    """
    cfg = cfg or RecoveryConfig()
    m_v = np.asarray(m_v, dtype=np.float64)
    m_warp = np.asarray(m_warp, dtype=np.float64)
    if m_v.shape != field.vectors.shape:
        raise ValueError("layer/field size mismatch")
    if m_warp.shape != m_v.shape:
        raise ValueError("warp prior size mismatch")
    lf, ls, lr = cfg.lambda_fit, cfg.lambda_smooth, cfg.lambda_reg
    if lf == 0.0 and ls == 0.0 and lr == 0.0:
        raise ValueError("at least one recovery weight must be positive")
    target = m_v + field.vectors
    if ls == 0.0 and lr == 0.0:
        return target.copy()

    n = len(m_v)
    rhs = lf * target + lr * m_warp
    if ls == 0.0:
        return rhs / (lf + lr)
    k = smoothing_operator(m_v, mesh, cfg.kernel_sigma)
    ik = sp.identity(n, format="csr") - k
    a = ((lf + lr) * sp.identity(n, format="csr")
         + ls * (ik.T @ ik)).tocsc()
    lu = splu(a)
    out = np.empty_like(m_v)
    for c in range(3):
        out[:, c] = lu.solve(rhs[:, c])
    return out


def recovery_energy(m: np.ndarray, m_v: np.ndarray, field: TightnessField,
                    m_warp: np.ndarray, mesh: TriMesh,
                    cfg: Optional[RecoveryConfig] = None) -> float:
    """Objective value of recover_shape at a candidate surface."""
    cfg = cfg or RecoveryConfig()
    m = np.asarray(m, dtype=np.float64)
    k = smoothing_operator(np.asarray(m_v, dtype=np.float64), mesh,
                           cfg.kernel_sigma)
    e = cfg.lambda_fit * np.sum((m_v + field.vectors - m) ** 2)
    e += cfg.lambda_smooth * np.sum((m - k @ m) ** 2)
    e += cfg.lambda_reg * np.sum((m - np.asarray(m_warp)) ** 2)
    return float(e)


# --------------------------------------------------------- segmentation

@dataclass
class GarmentLabels:
    labels: np.ndarray                       # (n,) int in {0 body, 1 upper, 2 lower}
    energies: List[float] = field(default_factory=list)   # per ICM sweep
    sweeps: int = 0

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 1:
            raise ValueError("labels must be a flat int array")
        if self.labels.size and not np.isin(self.labels, (0, 1, 2)).all():
            raise ValueError("labels must be 0 (body), 1 (upper) or 2 (lower)")

    def count(self, label: int) -> int:
        return int((self.labels == label).sum())


def segmentation_energy(unary: np.ndarray, edges: np.ndarray,
                        labels: np.ndarray, pairwise_weight: float) -> float:
    u = unary[np.arange(len(labels)), labels].sum()
    if len(edges):
        u += pairwise_weight * (labels[edges[:, 0]] != labels[edges[:, 1]]).sum()
    return float(u)


def icm_minimize(unary: np.ndarray, edges: np.ndarray,
                 pairwise_weight: float,
                 max_sweeps: int = 50) -> Tuple[np.ndarray, List[float]]:
    """Potts-model ICM: deterministic index-order sweeps from the unary argmin.

    Ties resolve to the lowest label, so results are reproducible; the
    per-sweep energy sequence is non-increasing by construction.
    """
    unary = np.asarray(unary, dtype=np.float64)
    if unary.ndim != 2:
        raise ValueError("unary must be (n, labels)")
    if pairwise_weight < 0.0:
        raise ValueError("pairwise weight must be >= 0")
    n = len(unary)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    adj = [np.array(x, dtype=np.int64) for x in adj]

    labels = np.argmin(unary, axis=1)
    energies = [segmentation_energy(unary, edges, labels, pairwise_weight)]
    for sweep in range(max_sweeps):
        changed = 0
        for i in range(n):
            cost = unary[i].copy()
            if len(adj[i]):
                neigh = labels[adj[i]]
                for lab in range(unary.shape[1]):
                    cost[lab] += pairwise_weight * np.count_nonzero(neigh != lab)
            best = int(np.argmin(cost))
            if best != labels[i]:
                labels[i] = best
                changed += 1
        energies.append(segmentation_energy(unary, edges, labels,
                                            pairwise_weight))
        if changed == 0:
            break
    return labels, energies


def segment_clothing(prediction: PredictionOutput, tpl: SkinnedTemplate,
                     pairwise_weight: float = 1.0,
                     max_sweeps: int = 50) -> GarmentLabels:
    """Per-vertex body/upper/lower labels from predicted mask planes."""
    attrs = inverse_gi(prediction.gi, tpl)
    for key in ("mask.upper", "mask.lower"):
        if key not in attrs:
            raise ValueError(f"prediction is missing channel '{key}'")
    pu = attrs["mask.upper"]
    pl = attrs["mask.lower"]
    for tag, p in (("upper", pu), ("lower", pl)):
        if not np.isfinite(p).all():
            raise ValueError(f"{tag} mask probabilities are not finite")
        if p.min() < -0.01 or p.max() > 1.01:
            raise ValueError(
                f"{tag} mask probabilities outside [0, 1]: "
                f"[{p.min():.4f}, {p.max():.4f}]")
    pu = np.clip(pu, 1e-6, 1.0)
    pl = np.clip(pl, 1e-6, 1.0)
    pb = np.clip(1.0 - pu - pl, 1e-6, 1.0)
    unary = -np.log(np.stack([pb, pu, pl], axis=1))
    edges = unique_edges(tpl.mesh.faces)
    labels, energies = icm_minimize(unary, edges, pairwise_weight, max_sweeps)
    return GarmentLabels(labels, energies, sweeps=len(energies) - 1)


# ----------------------------------------------------------- retargeting

def tangent_frames(vertices: np.ndarray, mesh: TriMesh,
                   uv: np.ndarray) -> np.ndarray:
    """(n, 3, 3) orthonormal frames, columns (tangent, bitangent, normal).

    The tangent follows the surface direction of increasing u, which is
    shared across bodies on the same template, so frame-to-frame rotations
    are well defined per vertex.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    normals = vertex_normals(mesh.with_vertices(vertices))
    tang = np.zeros_like(vertices)
    tris = mesh.faces
    p0, p1, p2 = (vertices[tris[:, k]] for k in range(3))
    w0, w1, w2 = (np.asarray(uv, dtype=np.float64)[tris[:, k]] for k in range(3))
    e1, e2 = p1 - p0, p2 - p0
    d1, d2 = w1 - w0, w2 - w0
    det = d1[:, 0] * d2[:, 1] - d2[:, 0] * d1[:, 1]
    safe = np.where(np.abs(det) > 1e-14, det, 1.0)
    t_face = (d2[:, 1:2] * e1 - d1[:, 1:2] * e2) / safe[:, None]
    t_face[np.abs(det) <= 1e-14] = 0.0
    for k in range(3):
        np.add.at(tang, tris[:, k], t_face)

    tang -= np.sum(tang * normals, axis=1, keepdims=True) * normals
    lens = np.linalg.norm(tang, axis=1)
    bad = lens < 1e-10
    if bad.any():
        # any stable perpendicular: cross against the least-aligned axis
        pick = np.argmin(np.abs(normals[bad]), axis=1)
        alt = np.zeros((bad.sum(), 3))
        alt[np.arange(len(alt)), pick] = 1.0
        tang[bad] = np.cross(normals[bad], alt)
        lens = np.linalg.norm(tang, axis=1)
    tang /= lens[:, None]
    bitan = np.cross(normals, tang)
    return np.stack([tang, bitan, normals], axis=2)


def retarget(tpl: SkinnedTemplate, labels: GarmentLabels, m_v: np.ndarray,
             field: TightnessField, target_body: np.ndarray
             ) -> Tuple[TriMesh, np.ndarray]:
    """Transfer the clothing layer onto another body on the same template.

    Returns the garment mesh (faces fully inside the garment labeling) and
    the template vertex ids it was cut from.
    """
    m_v = np.asarray(m_v, dtype=np.float64)
    target_body = np.asarray(target_body, dtype=np.float64)
    n = tpl.n_vertices
    if m_v.shape != (n, 3) or target_body.shape != (n, 3):
        raise ValueError("layers must match the template vertex count")
    if field.n_vertices != n or len(labels.labels) != n:
        raise ValueError("field/labels must match the template vertex count")

    source_body = m_v + field.vectors
    f_src = tangent_frames(source_body, tpl.mesh, tpl.uv)
    f_tgt = tangent_frames(target_body, tpl.mesh, tpl.uv)
    rot = np.einsum("nij,nkj->nik", f_tgt, f_src)
    placed = target_body - np.einsum("nij,nj->ni", rot, field.vectors)

    keep = labels.labels != 0
    if not keep.any():
        raise ValueError("no garment-labeled vertices to retarget")
    face_keep = keep[tpl.mesh.faces].all(axis=1)
    remap = -np.ones(n, dtype=np.int64)
    ids = np.flatnonzero(keep)
    remap[ids] = np.arange(len(ids))
    faces = remap[tpl.mesh.faces[face_keep]]
    colors = None
    if tpl.mesh.colors is not None:
        colors = tpl.mesh.colors[ids]
    return TriMesh(vertices=placed[ids], faces=faces, colors=colors), ids


def save_labels_ply(path, mesh: TriMesh, labels: GarmentLabels) -> None:
    """ASCII PLY with a per-vertex integer property `garment`."""
    if len(labels.labels) != mesh.n_vertices:
        raise ValueError("labels must match the mesh vertex count")
    lines = [
        "ply", "format ascii 1.0",
        f"element vertex {mesh.n_vertices}",
        "property float x", "property float y", "property float z",
        "property int garment",
        f"element face {mesh.n_faces}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    verts = mesh.vertices.astype(np.float32)
    for v, lab in zip(verts, labels.labels):
        lines.append(f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g} {int(lab)}")
    for f in mesh.faces:
        lines.append(f"3 {f[0]} {f[1]} {f[2]}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_labels_ply(path) -> GarmentLabels:
    """Read back the per-vertex `garment` property written by save_labels_ply."""
    lines = Path(path).read_text().splitlines()
    n = None
    props: List[str] = []
    body_at = None
    element = None
    for li, line in enumerate(lines):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "element":
            element = tok[1]
            if element == "vertex":
                n = int(tok[2])
        elif tok[0] == "property" and element == "vertex" and tok[1] != "list":
            props.append(tok[2])
        elif tok[0] == "end_header":
            body_at = li + 1
            break
    if n is None or body_at is None or "garment" not in props:
        raise ValueError(f"{path}: not a garment-label PLY")
    col = props.index("garment")
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        labels[i] = int(float(lines[body_at + i].split()[col]))
    return GarmentLabels(labels)
