"""Synthetic humanoid template and clothed-scan fixtures.

The body is a star-shaped radial graph around a belly origin: for every
direction on a polar grid we take the farthest ray exit through a set of
capsules (torso, limbs, neck, hands, feet) plus a head sphere, smooth the
radius field, and mesh the grid as a closed UV-sphere-like surface
(chi = 2). Occluded wedges (armpits, crotch) come out webbed, which is the
accepted trade for a seamless atlas.

The UV atlas is the polar disk chart: north pole (head crown) at the
square center, latitude rings mapped to concentric circles up to radius
0.45, and the tiny south cap (between the legs) closed by a fan whose
slivers are emitted first in the face list so every later face overwrites
them during rasterization. Polar caps are eased down to sub-millimetre
rings so bilinear lookups at the poles stay accurate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .mesh import TriMesh, vertex_normals
from .template import JointRig, SkinnedTemplate, skeletal_warp, _f32

BELLY = np.array([0.0, 1.05, 0.0])


@dataclass(frozen=True)
class SynthSpec:
    rings_mid: int = 40          # uniform latitude rings between the caps
    segments: int = 72           # azimuth steps
    torso_radius: float = 0.16
    hip_radius: float = 0.105
    shoulder_radius: float = 0.09
    neck_radius: float = 0.062
    head_radius: float = 0.115
    arm_radius: float = 0.058
    forearm_radius: float = 0.048
    hand_radius: float = 0.042
    thigh_radius: float = 0.085
    shin_radius: float = 0.062
    foot_radius: float = 0.05
    arm_scale: float = 1.0       # stretches shoulder->elbow->wrist offsets
    leg_scale: float = 1.0       # stretches hip->knee->ankle offsets
    smooth_iters: int = 8


_BASE_JOINTS = {
    # name: (parent, position)
    "pelvis": (None, (0.0, 0.98, 0.0)),
    "spine": ("pelvis", (0.0, 1.14, 0.0)),
    "chest": ("spine", (0.0, 1.30, 0.0)),
    "neck": ("chest", (0.0, 1.46, 0.0)),
    "head": ("neck", (0.0, 1.56, 0.0)),
    "shoulder_l": ("chest", (0.17, 1.42, 0.0)),
    "elbow_l": ("shoulder_l", (0.38, 1.26, 0.0)),
    "wrist_l": ("elbow_l", (0.56, 1.11, 0.0)),
    "shoulder_r": ("chest", (-0.17, 1.42, 0.0)),
    "elbow_r": ("shoulder_r", (-0.38, 1.26, 0.0)),
    "wrist_r": ("elbow_r", (-0.56, 1.11, 0.0)),
    "hip_l": ("pelvis", (0.10, 0.92, 0.0)),
    "knee_l": ("hip_l", (0.17, 0.52, 0.0)),
    "ankle_l": ("knee_l", (0.21, 0.12, 0.0)),
    "hip_r": ("pelvis", (-0.10, 0.92, 0.0)),
    "knee_r": ("hip_r", (-0.17, 0.52, 0.0)),
    "ankle_r": ("knee_r", (-0.21, 0.12, 0.0)),
}

JOINT_NAMES = list(_BASE_JOINTS.keys())


def _joint_positions(spec: SynthSpec) -> Dict[str, np.ndarray]:
    pos = {name: np.array(p, dtype=np.float64)
           for name, (_, p) in _BASE_JOINTS.items()}
    for side in ("l", "r"):
        sh = pos[f"shoulder_{side}"]
        for name in (f"elbow_{side}", f"wrist_{side}"):
            pos[name] = sh + spec.arm_scale * (pos[name] - sh)
        hp = pos[f"hip_{side}"]
        for name in (f"knee_{side}", f"ankle_{side}"):
            pos[name] = hp + spec.leg_scale * (pos[name] - hp)
    return pos


def _capsules(spec: SynthSpec, pos: Dict[str, np.ndarray]):
    """(a, b, radius) primitives whose radial union is the body."""
    y = np.array([0.0, 1.0, 0.0])
    z = np.array([0.0, 0.0, 1.0])
    caps = [
        (np.array([0.0, 0.84, 0.0]), np.array([0.0, 1.38, 0.0]), spec.torso_radius),
        (pos["hip_l"], pos["hip_r"], spec.hip_radius),
        (pos["shoulder_l"], pos["shoulder_r"], spec.shoulder_radius),
        (np.array([0.0, 1.40, 0.0]), np.array([0.0, 1.50, 0.0]), spec.neck_radius),
        (pos["head"] - 0.02 * y, pos["head"] + 0.06 * y, spec.head_radius),
    ]
    for side in ("l", "r"):
        sh, el, wr = pos[f"shoulder_{side}"], pos[f"elbow_{side}"], pos[f"wrist_{side}"]
        caps.append((sh, el, spec.arm_radius))
        caps.append((el, wr, spec.forearm_radius))
        hand_dir = (wr - el) / np.linalg.norm(wr - el)
        caps.append((wr, wr + 0.11 * hand_dir, spec.hand_radius))
        hp, kn, an = pos[f"hip_{side}"], pos[f"knee_{side}"], pos[f"ankle_{side}"]
        caps.append((hp, kn, spec.thigh_radius))
        caps.append((kn, an, spec.shin_radius))
        caps.append((an, an + np.array([0.0, -0.05, 0.0]) + 0.10 * z,
                     spec.foot_radius))
    return caps


def _ray_exit_capsule(dirs: np.ndarray, a, b, r) -> np.ndarray:
    """Farthest intersection parameter t of rays (BELLY + t*dir) with a capsule."""
    t_best = np.full(len(dirs), -np.inf)

    def sphere(center):
        m = BELLY - center
        bq = dirs @ m
        cq = m @ m - r * r
        disc = bq * bq - cq
        ok = disc >= 0
        t = np.where(ok, -bq + np.sqrt(np.maximum(disc, 0.0)), -np.inf)
        return np.where(t > 0, t, -np.inf)

    np.maximum(t_best, sphere(a), out=t_best)
    np.maximum(t_best, sphere(b), out=t_best)

    ab = b - a
    L = np.linalg.norm(ab)
    if L > 1e-12:
        u = ab / L
        m = BELLY - a
        md = m - (m @ u) * u
        dd = dirs - np.outer(dirs @ u, u)
        A = (dd * dd).sum(1)
        B = 2.0 * dd @ md
        C = md @ md - r * r
        disc = B * B - 4.0 * A * C
        ok = (disc >= 0) & (A > 1e-14)
        sq = np.sqrt(np.maximum(disc, 0.0))
        for sign in (1.0, -1.0):
            t = np.where(ok, (-B + sign * sq) / np.maximum(2.0 * A, 1e-300), 0.0)
            s = (m + t[:, None] * dirs) @ u
            valid = ok & (t > 0) & (s >= 0) & (s <= L)
            np.maximum(t_best, np.where(valid, t, -np.inf), out=t_best)
    return t_best


def _ring_angles(spec: SynthSpec) -> np.ndarray:
    """Latitude schedule: eased sub-mm polar caps + uniform middle band."""
    north = np.array([0.1, 0.25, 0.5, 1.0, 2.0, 4.0])
    south = 180.0 - np.array([0.06, 0.15, 0.35, 0.8, 1.8, 4.0])[::-1]
    mid = np.linspace(8.0, 172.0, spec.rings_mid)
    return np.deg2rad(np.concatenate([north, mid, south]))


class _Grid:
    """Index bookkeeping for the polar grid mesh."""

    N_CAP = 6  # eased rings per polar cap (see _ring_angles)

    def __init__(self, spec: SynthSpec):
        self.thetas = _ring_angles(spec)
        self.K = len(self.thetas)
        self.M = spec.segments
        self.phis = 2.0 * np.pi * np.arange(self.M) / self.M
        self.north = 0
        self.south = 1 + self.K * self.M
        self.first_mid = self.N_CAP
        self.last_mid = self.N_CAP + spec.rings_mid - 1

    def vid(self, i: int, j: int) -> int:
        return 1 + i * self.M + (j % self.M)

    def vertex_count(self) -> int:
        return 2 + self.K * self.M

    def directions(self) -> np.ndarray:
        """Unit directions for all vertices (poles included), y-up."""
        out = np.zeros((self.vertex_count(), 3))
        out[self.north] = (0.0, 1.0, 0.0)
        out[self.south] = (0.0, -1.0, 0.0)
        st = np.sin(self.thetas)[:, None]
        ct = np.cos(self.thetas)[:, None]
        cp = np.cos(self.phis)[None, :]
        sp = np.sin(self.phis)[None, :]
        out[1:self.south, 0] = (st * cp).ravel()
        out[1:self.south, 1] = np.broadcast_to(ct, (self.K, self.M)).ravel()
        out[1:self.south, 2] = (st * sp).ravel()
        return out

    def faces(self) -> np.ndarray:
        """Closed triangulation; the south fan comes first (see module doc)."""
        f = []
        last = self.K - 1
        for j in range(self.M):
            f.append([self.south, self.vid(last, j + 1), self.vid(last, j)])
        for j in range(self.M):
            f.append([self.north, self.vid(0, j), self.vid(0, j + 1)])
        for i in range(self.K - 1):
            for j in range(self.M):
                a, b = self.vid(i, j), self.vid(i, j + 1)
                c, d = self.vid(i + 1, j + 1), self.vid(i + 1, j)
                f.append([a, b, c])
                f.append([a, c, d])
        return np.array(f, dtype=np.int64)

    def uv(self) -> np.ndarray:
        out = np.zeros((self.vertex_count(), 2))
        out[self.north] = (0.5, 0.5)
        radii = 0.45 * self.thetas / np.pi
        cp = np.cos(self.phis)[None, :]
        sp = np.sin(self.phis)[None, :]
        out[1:self.south, 0] = (0.5 + radii[:, None] * cp).ravel()
        out[1:self.south, 1] = (0.5 + radii[:, None] * sp).ravel()
        half = np.pi / self.M  # south pole sits on the last circle between j=0,1
        out[self.south] = (0.5 + radii[-1] * np.cos(half),
                           0.5 + radii[-1] * np.sin(half))
        return out

    def ring_row(self, theta: float) -> int:
        return int(np.argmin(np.abs(self.thetas - theta)))

    def dir_cell(self, d: np.ndarray) -> tuple[int, int]:
        d = d / np.linalg.norm(d)
        theta = float(np.arccos(np.clip(d[1], -1, 1)))
        phi = float(np.arctan2(d[2], d[0])) % (2.0 * np.pi)
        return self.ring_row(theta), int(np.round(phi / (2 * np.pi / self.M))) % self.M

    def rect_ring(self, row: int, col: int, dr: int, dc: int) -> np.ndarray:
        """Closed loop of vertex ids around a (row +- dr) x (col +- dc) patch."""
        r0, r1 = row - dr, row + dr
        loop = [self.vid(r0, c) for c in range(col - dc, col + dc + 1)]
        loop += [self.vid(r, col + dc) for r in range(r0 + 1, r1 + 1)]
        loop += [self.vid(r1, c) for c in range(col + dc - 1, col - dc - 1, -1)]
        loop += [self.vid(r, col - dc) for r in range(r1 - 1, r0, -1)]
        return np.array(loop, dtype=np.int64)


def _smooth_grid(grid: _Grid, rho: np.ndarray, iters: int) -> np.ndarray:
    """Laplacian smoothing of the per-vertex radius over the grid graph."""
    K, M = grid.K, grid.M
    r = rho[1:grid.south].reshape(K, M).copy()
    north, south = rho[grid.north], rho[grid.south]
    for _ in range(iters):
        up = np.vstack([np.full(M, north), r[:-1]])
        down = np.vstack([r[1:], np.full(M, south)])
        nb = 0.25 * (np.roll(r, 1, axis=1) + np.roll(r, -1, axis=1) + up + down)
        r = 0.5 * r + 0.5 * nb
        north = 0.5 * north + 0.5 * r[0].mean()
        south = 0.5 * south + 0.5 * r[-1].mean()
    out = rho.copy()
    out[1:grid.south] = r.ravel()
    out[grid.north] = north
    out[grid.south] = south
    return out


def _skin_weights(verts: np.ndarray, rig: JointRig, k: int = 4):
    """Inverse-cube distance weights to the k nearest bone segments."""
    rest = rig.rest_joint_positions()
    n_j = rig.n_joints
    dist = np.empty((len(verts), n_j))
    for j in range(n_j):
        p = int(rig.parents[j])
        a = rest[p] if p >= 0 else rest[j]
        b = rest[j]
        ab = b - a
        L2 = float(ab @ ab)
        if L2 < 1e-12:
            d = np.linalg.norm(verts - a, axis=1)
        else:
            t = np.clip((verts - a) @ ab / L2, 0.0, 1.0)
            d = np.linalg.norm(verts - (a + t[:, None] * ab), axis=1)
        dist[:, j] = d
    idx = np.argsort(dist, axis=1)[:, :k]
    rows = np.arange(len(verts))[:, None]
    w = 1.0 / (dist[rows, idx] + 0.02) ** 3
    w /= w.sum(axis=1, keepdims=True)
    return idx.astype(np.int64), w


def _body_regions(spec: SynthSpec, grid: _Grid, pos: Dict[str, np.ndarray]):
    """Latitude rows of the garment boundaries and wrist/ankle grid cells.

    The radial surface has no free-standing neck tube (the head and
    shoulder envelopes shadow it), so the collar line sits just below the
    head's angular disk as seen from the belly origin.
    """
    def theta_of(point):
        v = np.asarray(point, dtype=np.float64) - BELLY
        return float(np.arccos(np.clip(v[1] / np.linalg.norm(v), -1, 1)))

    head_disk = np.arctan2(spec.head_radius, pos["head"][1] - BELLY[1])
    rows = {
        "neck": grid.ring_row(head_disk + np.deg2rad(6.0)),
        "waist": grid.ring_row(theta_of([spec.torso_radius, 0.95, 0.0])),
    }
    cells = {}
    for side in ("l", "r"):
        wr, wc = grid.dir_cell(pos[f"wrist_{side}"] - BELLY)
        ar, ac = grid.dir_cell(pos[f"ankle_{side}"] - BELLY)
        # keep the +-2 row rectangles out of the sub-mm polar cap rings
        cells[f"wrist_{side}"] = (int(np.clip(wr, grid.first_mid + 2,
                                              grid.last_mid - 2)), wc)
        cells[f"ankle_{side}"] = (int(np.clip(ar, grid.first_mid + 2,
                                              grid.last_mid - 2)), ac)
    return rows, cells


def generate_synthetic_template(spec: Optional[SynthSpec] = None) -> SkinnedTemplate:
    """Build the synthetic skinned humanoid (closed, genus 0, >= 2000 verts)."""
    spec = spec or SynthSpec()
    grid = _Grid(spec)
    pos = _joint_positions(spec)
    dirs = grid.directions()
    rho = np.full(len(dirs), -np.inf)
    for a, b, r in _capsules(spec, pos):
        np.maximum(rho, _ray_exit_capsule(dirs, a, b, r), out=rho)
    if not np.isfinite(rho).all():
        raise RuntimeError("a body ray missed every capsule; origin not interior")
    rho = _smooth_grid(grid, rho, spec.smooth_iters)
    verts = _f32(BELLY + rho[:, None] * dirs)
    faces = grid.faces()

    mesh = TriMesh(verts, faces)
    # orient faces outward (positive enclosed volume)
    vol = np.einsum("ij,ij->", verts[faces[:, 0]],
                    np.cross(verts[faces[:, 1]], verts[faces[:, 2]])) / 6.0
    if vol < 0:
        faces = faces[:, ::-1].copy()
        mesh = TriMesh(verts, faces)

    # gentle per-vertex coloring (quantized so containers round-trip)
    base = np.array([0.62, 0.55, 0.48])
    shade = 0.15 * dirs
    colors = np.clip(base + shade, 0.0, 1.0)
    colors = np.rint(colors * 255.0) / 255.0
    mesh = TriMesh(verts, faces, colors=colors)
    mesh.normals = _f32(vertex_normals(mesh))

    names = JOINT_NAMES
    parents = np.array(
        [-1 if _BASE_JOINTS[n][0] is None else names.index(_BASE_JOINTS[n][0])
         for n in names], dtype=np.int64)
    offsets = np.zeros((len(names), 3))
    for i, n in enumerate(names):
        p = _BASE_JOINTS[n][0]
        offsets[i] = pos[n] - (pos[p] if p else 0.0)
    rig = JointRig(names=names, parents=parents, rest_offsets=_f32(offsets),
                   theta=np.zeros((len(names), 3)), scale=np.ones(len(names)),
                   translation=np.zeros(3))

    wj, wv = _skin_weights(verts, rig)

    rows, cells = _body_regions(spec, grid, pos)
    rings = {
        "neck": np.array([grid.vid(rows["neck"], j) for j in range(grid.M)],
                         dtype=np.int64),
        "waist": np.array([grid.vid(rows["waist"], j) for j in range(grid.M)],
                          dtype=np.int64),
    }
    for name, (row, col) in cells.items():
        rings[name] = grid.rect_ring(row, col, 2, 3)

    return SkinnedTemplate(mesh=mesh, rig=rig, weight_joints=wj,
                           weight_values=_f32(wv), uv=_f32(grid.uv()),
                           boundary_rings=rings)


# ---------------------------------------------------------------- fixtures

POSE_PRESETS = ("rest", "bend", "lean", "twist")


def pose_rig(rig: JointRig, pose: str, translation=(0.0, 0.0, 0.0)) -> JointRig:
    theta = np.zeros_like(rig.theta)

    def set_t(name, vec):
        theta[rig.index(name)] = vec

    if pose == "rest":
        pass
    elif pose == "bend":
        set_t("elbow_l", (0.0, 0.0, 0.45))
        set_t("elbow_r", (0.0, 0.0, -0.45))
        set_t("knee_l", (0.25, 0.0, 0.0))
        set_t("knee_r", (0.25, 0.0, 0.0))
        set_t("spine", (0.08, 0.0, 0.0))
    elif pose == "lean":
        set_t("spine", (0.22, 0.0, 0.0))
        set_t("chest", (0.10, 0.0, 0.0))
        set_t("neck", (-0.10, 0.0, 0.0))
    elif pose == "twist":
        set_t("spine", (0.0, 0.30, 0.0))
        set_t("shoulder_l", (0.0, 0.0, 0.25))
        set_t("shoulder_r", (0.0, 0.0, -0.25))
    else:
        raise ValueError(f"unknown pose preset '{pose}' (use one of {POSE_PRESETS})")
    return rig.with_pose(theta=theta,
                         translation=np.asarray(translation, dtype=np.float64))


@dataclass
class SynthFixture:
    template: SkinnedTemplate
    scan: TriMesh             # posed, clothed, with normals + colors
    body: TriMesh             # posed ground-truth body (template topology)
    joints: Dict[str, np.ndarray]
    labels: np.ndarray        # (n,) 0 body / 1 upper / 2 lower
    upper_offset: float
    lower_offset: float
    pose: str
    seed: int


def make_clothed_fixture(spec: Optional[SynthSpec] = None,
                         upper_offset: float = 0.03,
                         lower_offset: float = 0.03,
                         pose: str = "rest",
                         noise: float = 0.0,
                         translation=(0.0, 0.0, 0.0),
                         seed: int = 0) -> SynthFixture:
    """Posed template + offset clothing shell + ground truth side-channels.

    `lower_offset = 0` produces the no-lower-garment (skirt-free) category:
    its lower labels/masks are empty.
    """
    spec = spec or SynthSpec()
    template = generate_synthetic_template(spec)
    grid = _Grid(spec)
    pos = _joint_positions(spec)
    rows, cells = _body_regions(spec, grid, pos)

    labels = np.zeros(template.n_vertices, dtype=np.int64)
    ring_idx = np.full(template.n_vertices, -1, dtype=np.int64)
    col_idx = np.full(template.n_vertices, -1, dtype=np.int64)
    ids = np.arange(grid.K * grid.M)
    ring_idx[1:grid.south] = ids // grid.M
    col_idx[1:grid.south] = ids % grid.M

    neck_row, waist_row = rows["neck"], rows["waist"]
    ankle_row = min(cells["ankle_l"][0], cells["ankle_r"][0])
    upper = (ring_idx > neck_row) & (ring_idx <= waist_row)
    # bare hands: drop grid cells at/below the wrist row in the wrist columns
    for side in ("l", "r"):
        wrow, wcol = cells[f"wrist_{side}"]
        dc = (col_idx - wcol) % grid.M
        near = np.minimum(dc, grid.M - dc) <= 3
        upper &= ~((ring_idx >= wrow) & near)
    lower = (ring_idx > waist_row) & (ring_idx <= ankle_row)
    if upper_offset > 0:
        labels[upper] = 1
    if lower_offset > 0:
        labels[lower] = 2

    rig = pose_rig(template.rig, pose, translation)
    body = skeletal_warp(template, rig)
    body.colors = template.mesh.colors
    body.normals = vertex_normals(body)

    # taper the offset over a few rings inside each band edge
    def ease(mask_rows, r_lo, r_hi):
        ramp_in = np.clip((ring_idx - r_lo) / 3.0, 0.0, 1.0)
        ramp_out = np.clip((r_hi - ring_idx) / 3.0, 0.0, 1.0)
        e = np.minimum(ramp_in, ramp_out)
        return np.where(mask_rows, e, 0.0)

    offset = np.zeros(template.n_vertices)
    if upper_offset > 0:
        offset += upper_offset * ease(upper, neck_row, waist_row + 1)
    if lower_offset > 0:
        offset += lower_offset * ease(lower, waist_row, ankle_row + 1)

    rng = np.random.default_rng(seed)
    if noise > 0:
        offset = offset + noise * rng.standard_normal(len(offset)) * (offset > 0)

    scan_verts = body.vertices + offset[:, None] * body.normals
    colors = body.colors.copy()
    colors[labels == 1] = (0.75, 0.30, 0.25)
    colors[labels == 2] = (0.25, 0.32, 0.62)
    scan = TriMesh(scan_verts, body.faces.copy(), colors=colors)
    scan.normals = vertex_normals(scan)

    _, jpos = rig.posed_joints()
    joints = {name: jpos[i].copy() for i, name in enumerate(rig.names)}

    return SynthFixture(template=template, scan=scan, body=body, joints=joints,
                        labels=labels, upper_offset=upper_offset,
                        lower_offset=lower_offset, pose=pose, seed=seed)
