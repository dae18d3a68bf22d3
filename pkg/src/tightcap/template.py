"""Skinned body template: rig, skin weights, UV atlas, garment rings.

A template bundles a genus-0 body mesh with a joint tree, linear-blend
skin weights, a single-chart UV atlas in [0,1]^2 and named boundary rings
(closed edge loops) marking garment boundaries. Templates are saved as a
directory: `mesh.ply` (binary) plus `template.yaml` (rig/weights/uv/rings,
floats as 9-significant-digit decimals, which round-trips the float32
payload bit-exactly).
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List

import numpy as np

from . import so3
from .mesh import MeshError, TriMesh, unique_edges, vertex_normals
from .meshio import load_mesh, save_mesh
from .yamlio import load_tree, save_tree

FORMAT_VERSION = 1


class TemplateError(ValueError):
    """Raised for structurally invalid rigs/templates or bad container files."""


# ---------------------------------------------------------------- rig

@dataclass
class JointRig:
    names: List[str]
    parents: np.ndarray        # (j,) int64, -1 for the single root
    rest_offsets: np.ndarray   # (j, 3) offset from parent joint (root: world)
    theta: np.ndarray          # (j, 3) axis-angle pose
    scale: np.ndarray          # (j,) > 0, stretches the parent->joint bone
    translation: np.ndarray    # (3,) global

    def __post_init__(self):
        j = len(self.names)
        self.parents = np.asarray(self.parents, dtype=np.int64).reshape(j)
        self.rest_offsets = np.asarray(self.rest_offsets, dtype=np.float64).reshape(j, 3)
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(j, 3)
        self.scale = np.asarray(self.scale, dtype=np.float64).reshape(j)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if len(set(self.names)) != j:
            raise TemplateError("duplicate joint names")
        roots = np.nonzero(self.parents < 0)[0]
        if len(roots) != 1:
            raise TemplateError(f"rig must have exactly one root, found {len(roots)}")
        if (self.scale <= 0).any():
            raise TemplateError("joint scales must be positive")
        # parent indices must form a tree (each node reaches the root)
        for i in range(j):
            seen = set()
            k = i
            while k >= 0:
                if k in seen:
                    raise TemplateError(f"joint cycle through '{self.names[i]}'")
                seen.add(k)
                p = int(self.parents[k])
                if p >= j:
                    raise TemplateError(f"joint '{self.names[k]}' has bad parent {p}")
                k = p

    @property
    def n_joints(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise TemplateError(f"rig has no joint named '{name}'")

    def topo_order(self) -> list[int]:
        order: list[int] = []
        children: dict[int, list[int]] = {}
        root = -1
        for i, p in enumerate(self.parents):
            if p < 0:
                root = i
            else:
                children.setdefault(int(p), []).append(i)
        stack = [root]
        while stack:
            k = stack.pop()
            order.append(k)
            stack.extend(reversed(children.get(k, [])))
        return order

    def is_identity_pose(self) -> bool:
        return (not self.theta.any()) and (self.scale == 1.0).all()

    def with_pose(self, theta=None, scale=None, translation=None) -> "JointRig":
        return replace(
            self,
            theta=self.theta if theta is None else np.asarray(theta, dtype=np.float64),
            scale=self.scale if scale is None else np.asarray(scale, dtype=np.float64),
            translation=(self.translation if translation is None
                         else np.asarray(translation, dtype=np.float64)),
        )

    def rest_joint_positions(self) -> np.ndarray:
        pos = np.zeros((self.n_joints, 3))
        for k in self.topo_order():
            p = int(self.parents[k])
            base = pos[p] if p >= 0 else 0.0
            pos[k] = base + self.rest_offsets[k]
        return pos

    def posed_joints(self) -> tuple[np.ndarray, np.ndarray]:
        """World rotations (j,3,3) and positions (j,3) of the posed rig."""
        R = np.zeros((self.n_joints, 3, 3))
        pos = np.zeros((self.n_joints, 3))
        for k in self.topo_order():
            Rl = so3.exp(self.theta[k])
            off = self.scale[k] * self.rest_offsets[k]
            p = int(self.parents[k])
            if p < 0:
                R[k] = Rl
                pos[k] = off + self.translation
            else:
                R[k] = R[p] @ Rl
                pos[k] = pos[p] + R[p] @ off
        return R, pos


# ---------------------------------------------------------------- template

@dataclass
class SkinnedTemplate:
    mesh: TriMesh
    rig: JointRig
    weight_joints: np.ndarray   # (n, k) int64, zero-padded
    weight_values: np.ndarray   # (n, k) float64 >= 0, rows sum to 1 (1e-6)
    uv: np.ndarray              # (n, 2) in [0, 1]^2
    boundary_rings: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n = self.mesh.n_vertices
        self.weight_joints = np.asarray(self.weight_joints, dtype=np.int64)
        self.weight_values = np.asarray(self.weight_values, dtype=np.float64)
        if self.weight_joints.shape != self.weight_values.shape \
                or self.weight_joints.ndim != 2 or len(self.weight_joints) != n:
            raise TemplateError("skin weight arrays must both be (n, k)")
        if self.weight_joints.size and (
                self.weight_joints.min() < 0
                or self.weight_joints.max() >= self.rig.n_joints):
            raise TemplateError("skin weight joint index out of range")
        if (self.weight_values < 0).any():
            raise TemplateError("skin weights must be non-negative")
        sums = self.weight_values.sum(axis=1)
        if np.abs(sums - 1.0).max() > 1e-6:
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise TemplateError(
                f"skin weights of vertex {bad} sum to {sums[bad]:.9g}, not 1")
        self.uv = np.asarray(self.uv, dtype=np.float64).reshape(n, 2)
        if self.uv.min() < 0.0 or self.uv.max() > 1.0:
            raise TemplateError("uv coordinates must lie in [0, 1]^2")
        f = self.mesh.faces
        a = self.uv[f[:, 0]]
        e1, e2 = self.uv[f[:, 1]] - a, self.uv[f[:, 2]] - a
        area2 = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if (np.abs(area2) <= 1e-16).any():
            bad = int(np.argmax(np.abs(area2) <= 1e-16))
            raise TemplateError(f"face {bad} has a degenerate UV triangle")
        edge_set = _edge_set(f)
        rings = {}
        for name, ring in self.boundary_rings.items():
            ring = np.asarray(ring, dtype=np.int64).reshape(-1)
            if len(ring) < 3 or len(set(ring.tolist())) != len(ring):
                raise TemplateError(f"ring '{name}' is not a simple loop")
            for i in range(len(ring)):
                a_, b_ = int(ring[i]), int(ring[(i + 1) % len(ring)])
                if (min(a_, b_), max(a_, b_)) not in edge_set:
                    raise TemplateError(
                        f"ring '{name}' segment {a_}-{b_} is not a mesh edge")
            rings[name] = ring
        self.boundary_rings = rings

    @property
    def n_vertices(self) -> int:
        return self.mesh.n_vertices

    def uv_version(self) -> int:
        """Stable 32-bit id of the UV layout (changes when the atlas does)."""
        return zlib.crc32(self.uv.astype("<f4").tobytes()) & 0xFFFFFFFF

    def dense_weights(self) -> np.ndarray:
        w = np.zeros((self.n_vertices, self.rig.n_joints))
        rows = np.arange(self.n_vertices)[:, None]
        np.add.at(w, (rows, self.weight_joints), self.weight_values)
        return w


def _edge_set(faces: np.ndarray) -> set:
    e = unique_edges(faces)
    return {(int(a), int(b)) for a, b in e}


# ---------------------------------------------------------------- LBS

def skeletal_warp(template: SkinnedTemplate, rig: JointRig) -> TriMesh:
    """Linear-blend skinning of the template mesh under the given pose.

    Identity poses return exactly the input vertices, pure translations add
    exactly the translation; the general path blends per-joint rigid deltas.
    """
    if rig.n_joints != template.rig.n_joints:
        raise TemplateError("pose rig joint count differs from template rig")
    v = template.mesh.vertices
    if rig.is_identity_pose():
        # exactness guarantee for the degenerate poses
        if not rig.translation.any():
            return template.mesh.with_vertices(v.copy())
        return template.mesh.with_vertices(v + rig.translation)
    rest = template.rig.rest_joint_positions()
    R, pos = rig.posed_joints()
    wj = template.weight_joints
    wv = template.weight_values
    out = v.copy()
    # delta formulation: v + sum_j w_ij [(R_j - I)(v - rest_j) + (pos_j - rest_j)]
    for k in range(wj.shape[1]):
        j = wj[:, k]
        w = wv[:, k]
        d = v - rest[j]
        Rm = R[j] - np.eye(3)[None, :, :]
        delta = np.einsum("nab,nb->na", Rm, d) + (pos[j] - rest[j])
        out += w[:, None] * delta
    return template.mesh.with_vertices(out)


# ---------------------------------------------------------------- refine

def refine_garment_boundaries(template: SkinnedTemplate) -> SkinnedTemplate:
    """One red-green subdivision pass around every boundary ring.

    Faces touching a ring vertex are split 1-to-4; neighbors sharing split
    edges are split 1-to-2/1-to-3 so the surface stays crack-free. Every
    new vertex is an edge midpoint; weights/uv/colors interpolate linearly
    and rings are remapped onto the refined loops.
    """
    mesh = template.mesh
    faces = mesh.faces
    ring_verts: set[int] = set()
    for ring in template.boundary_rings.values():
        ring_verts.update(int(x) for x in ring)
    red = np.zeros(len(faces), dtype=bool)
    for k in range(3):
        red |= np.isin(faces[:, k], list(ring_verts))

    # every edge of a red face gets a midpoint; propagate to neighbors that
    # now see 3 split edges (they effectively become red)
    split_edges: set[tuple[int, int]] = set()
    for fi in np.nonzero(red)[0]:
        a, b, c = (int(x) for x in faces[fi])
        for e in ((a, b), (b, c), (c, a)):
            split_edges.add((min(e), max(e)))
    while True:
        grew = False
        for fi in np.nonzero(~red)[0]:
            a, b, c = (int(x) for x in faces[fi])
            es = [(min(a, b), max(a, b)), (min(b, c), max(b, c)),
                  (min(c, a), max(c, a))]
            if sum(e in split_edges for e in es) == 3:
                red[fi] = True
                grew = True
        if not grew:
            break

    n0 = mesh.n_vertices
    midpoint_of: dict[tuple[int, int], int] = {}
    new_order: list[tuple[int, int]] = []
    for e in sorted(split_edges):
        midpoint_of[e] = n0 + len(new_order)
        new_order.append(e)

    def mid(a: int, b: int) -> int:
        return midpoint_of[(min(a, b), max(a, b))]

    new_faces: list[list[int]] = []
    for fi, (a, b, c) in enumerate(faces):
        a, b, c = int(a), int(b), int(c)
        if red[fi]:
            mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, mab, mca], [mab, b, mbc],
                          [mca, mbc, c], [mab, mbc, mca]]
            continue
        es = [(a, b), (b, c), (c, a)]
        splits = [e for e in es if (min(e), max(e)) in split_edges]
        if not splits:
            new_faces.append([a, b, c])
        elif len(splits) == 1:
            # rotate so the split edge is (a, b)
            while (min(a, b), max(a, b)) not in split_edges:
                a, b, c = b, c, a
            m = mid(a, b)
            new_faces += [[a, m, c], [m, b, c]]
        else:  # two split edges: rotate so (a,b) and (b,c) are split
            while not ((min(a, b), max(a, b)) in split_edges
                       and (min(b, c), max(b, c)) in split_edges):
                a, b, c = b, c, a
            m1, m2 = mid(a, b), mid(b, c)
            new_faces += [[a, m1, c], [m1, m2, c], [m1, b, m2]]

    def interp(arr: np.ndarray) -> np.ndarray:
        rows = [arr]
        add = np.empty((len(new_order),) + arr.shape[1:], dtype=arr.dtype)
        for i, (p, q) in enumerate(new_order):
            add[i] = 0.5 * (arr[p] + arr[q])
        rows.append(add)
        return np.concatenate(rows, axis=0)

    verts = _f32(interp(mesh.vertices))
    uv = _f32(interp(template.uv))
    colors = None
    if mesh.colors is not None:
        colors = np.clip(np.rint(interp(mesh.colors) * 255), 0, 255) / 255.0

    # merge the sparse weight rows of the two endpoints
    kmax = template.weight_joints.shape[1]
    merged_j: list[np.ndarray] = []
    merged_w: list[np.ndarray] = []
    dense_cols = template.rig.n_joints
    for p, q in new_order:
        acc = np.zeros(dense_cols)
        for src in (p, q):
            np.add.at(acc, template.weight_joints[src],
                      0.5 * template.weight_values[src])
        nz = np.nonzero(acc)[0]
        merged_j.append(nz)
        merged_w.append(acc[nz])
    new_k = max([kmax] + [len(x) for x in merged_j])
    wj = np.zeros((n0 + len(new_order), new_k), dtype=np.int64)
    wv = np.zeros((n0 + len(new_order), new_k))
    wj[:n0, :kmax] = template.weight_joints
    wv[:n0, :kmax] = template.weight_values
    for i, (jj, ww) in enumerate(zip(merged_j, merged_w)):
        wj[n0 + i, :len(jj)] = jj
        wv[n0 + i, :len(ww)] = ww
    wv = _f32(wv / wv.sum(axis=1, keepdims=True))

    rings = {}
    for name, ring in template.boundary_rings.items():
        loop: list[int] = []
        r = ring.tolist()
        for i, a in enumerate(r):
            b = r[(i + 1) % len(r)]
            loop.append(int(a))
            key = (min(a, b), max(a, b))
            if key in midpoint_of:
                loop.append(midpoint_of[key])
        rings[name] = np.array(loop, dtype=np.int64)

    new_mesh = TriMesh(verts, np.array(new_faces, dtype=np.int64), colors=colors)
    new_mesh.normals = _f32(vertex_normals(new_mesh))
    return SkinnedTemplate(new_mesh, template.rig, wj, wv, uv, rings)


def _f32(a: np.ndarray) -> np.ndarray:
    """Canonicalize through float32 so text/binary containers round-trip."""
    return a.astype(np.float32).astype(np.float64)


# ---------------------------------------------------------------- container

def save_template(path, template: SkinnedTemplate) -> None:
    """Write the template as a directory: mesh.ply + template.yaml."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    save_mesh(path / "mesh.ply", template.mesh, binary=True)
    rig = template.rig
    doc = {
        "format_version": FORMAT_VERSION,
        "uv_version": template.uv_version(),
        "rig": {
            "names": list(rig.names),
            "parents": rig.parents.tolist(),
            "rest_offsets": rig.rest_offsets.tolist(),
            "theta": rig.theta.tolist(),
            "scale": rig.scale.tolist(),
            "translation": rig.translation.tolist(),
        },
        "skin_weights": {
            "joints": template.weight_joints.tolist(),
            "values": template.weight_values.tolist(),
        },
        "uv": template.uv.tolist(),
        "boundary_rings": {k: v.tolist() for k, v in template.boundary_rings.items()},
    }
    save_tree(path / "template.yaml", doc)


def load_template(path) -> SkinnedTemplate:
    path = Path(path)
    mesh_file = path / "mesh.ply"
    tree_file = path / "template.yaml"
    if not mesh_file.exists() or not tree_file.exists():
        raise TemplateError(f"{path} is not a template directory "
                            "(needs mesh.ply and template.yaml)")
    doc = load_tree(tree_file)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise TemplateError(f"unsupported template format_version {version!r}")
    mesh = load_mesh(mesh_file)
    rig_doc = doc["rig"]
    rig = JointRig(
        names=list(rig_doc["names"]),
        parents=np.array(rig_doc["parents"], dtype=np.int64),
        rest_offsets=np.array(rig_doc["rest_offsets"], dtype=np.float64),
        theta=np.array(rig_doc["theta"], dtype=np.float64),
        scale=np.array(rig_doc["scale"], dtype=np.float64),
        translation=np.array(rig_doc["translation"], dtype=np.float64),
    )
    tpl = SkinnedTemplate(
        mesh=mesh,
        rig=rig,
        weight_joints=np.array(doc["skin_weights"]["joints"], dtype=np.int64),
        weight_values=np.array(doc["skin_weights"]["values"], dtype=np.float64),
        uv=np.array(doc["uv"], dtype=np.float64),
        boundary_rings={k: np.array(v, dtype=np.int64)
                        for k, v in doc.get("boundary_rings", {}).items()},
    )
    stored = doc.get("uv_version")
    if stored is not None and int(stored) != tpl.uv_version():
        raise TemplateError("uv_version in template.yaml does not match the uv data")
    return tpl
