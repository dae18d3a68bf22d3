"""Three-stage alignment of a skinned template to a clothed scan.

Stage order: skeletal initialization (rig fit to provided 3D joints),
silhouette ICP on an embedded-deformation graph against 30 virtual views,
point-cloud ICP on a finer graph, and per-vertex refinement. Energies are
built from residual blocks (weights folded as square roots) and minimized
with the damped Gauss-Newton engine; rotation increments are retracted
into the graph state after every accepted step.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import so3
from .cameras import Camera, CameraRig, build_camera_rig
from .deform import (EDGraph, EDState, arap_with_jacobian, bind_points,
                     build_ed_graph, warp_points, warp_with_jacobian)
from .mesh import TriMesh, vertex_normals
from .meshio import save_mesh
from .metrics import MetricReport, hausdorff_metrics
from .silhouette import SilhouetteObs, render_silhouette
from .solver import ResidualBlock, SolveOptions, solve
from .spatial import SpatialIndex
from .template import JointRig, SkinnedTemplate, skeletal_warp
from .yamlio import save_tree, to_plain


class RegistrationError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class RegistrationConfig:
    lambda_reg_s: float = 10.0
    lambda_point_d: float = 0.5
    lambda_plane_d: float = 1.5
    lambda_reg_d: float = 7.0
    lambda_point_v: float = 1.0
    lambda_plane_v: float = 1.5
    lambda_reg_v: float = 1.0
    nodes_silhouette: int = 1407
    nodes_pointcloud: int = 2103
    icp_iters: int = 6
    gn_iters: int = 4
    fit_iters: int = 30
    gate_distance_frac: float = 0.05
    gate_normal_deg: float = 60.0
    resolution: int = 512
    fill_fraction: float = 0.8
    silhouette_stride: int = 2
    bind_k: int = 4
    graph_k: int = 6
    seed: int = 0

    def __post_init__(self):
        for name in ("lambda_reg_s", "lambda_point_d", "lambda_plane_d",
                     "lambda_reg_d", "lambda_point_v", "lambda_plane_v",
                     "lambda_reg_v"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.icp_iters < 1 or self.gn_iters < 1:
            raise ValueError("iteration counts must be >= 1")

    def solve_options(self) -> SolveOptions:
        return SolveOptions(max_iters=self.gn_iters)


def thread_count() -> int:
    env = os.environ.get("TIGHTCAP_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def _pmap(fn: Callable, items: Sequence):
    if thread_count() <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=thread_count()) as ex:
        return list(ex.map(fn, items))


# ------------------------------------------------------------- joints I/O

def load_joints(path) -> Dict[str, np.ndarray]:
    """Text format: one `name x y z` record per line, '#' comments."""
    joints: Dict[str, np.ndarray] = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{path}:{ln}: expected 'name x y z'")
        try:
            joints[parts[0]] = np.array([float(v) for v in parts[1:]])
        except ValueError as exc:
            raise ValueError(f"{path}:{ln}: {exc}") from None
    return joints


def save_joints(path, joints: Dict[str, np.ndarray]) -> None:
    lines = [f"{name} {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}"
             for name, p in joints.items()]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- rig fit

def _ancestors(parents: np.ndarray) -> List[List[int]]:
    out = []
    for j in range(len(parents)):
        chain = []
        p = int(parents[j])
        while p >= 0:
            chain.append(p)
            p = int(parents[p])
        out.append(chain)
    return out


def make_fit_block(rig: JointRig, targets: Dict[str, np.ndarray]
                   ) -> ResidualBlock:
    """Joint-position residuals over pose parameters (thetas + root shift)."""
    names = [n for n in rig.names if n in targets]
    sel = np.array([rig.index(n) for n in names], dtype=np.int64)
    tgt = np.stack([np.asarray(targets[n], dtype=np.float64) for n in names])
    anc = _ancestors(rig.parents)
    nj = rig.n_joints

    def fn(x):
        theta = x[:3 * nj].reshape(nj, 3)
        posed = rig.with_pose(theta=theta, translation=x[3 * nj:])
        Rw, pos = posed.posed_joints()
        r = (pos[sel] - tgt).ravel()
        J = np.zeros((3 * len(sel), 3 * nj + 3))
        for row, j in enumerate(sel):
            J[3 * row:3 * row + 3, 3 * nj:] = np.eye(3)
            for a in anc[j]:
                p = int(rig.parents[a])
                Rp = Rw[p] if p >= 0 else np.eye(3)
                blk = -so3.hat(pos[j] - pos[a]) @ Rp @ so3.left_jacobian(theta[a])
                J[3 * row:3 * row + 3, 3 * a:3 * a + 3] = blk
        return r, J

    return ResidualBlock(name="fit", fn=fn)


def make_pose_reg_block(n_joints: int, weight: float = 1e-4) -> ResidualBlock:
    """Tiny pull of all joint angles to zero; pins unobservable DOFs."""
    sw = np.sqrt(weight)

    def fn(x):
        nt = 3 * n_joints
        J = sp.hstack([sw * sp.eye(nt), sp.csr_matrix((nt, 3))], format="csr")
        return sw * x[:nt], J

    return ResidualBlock(name="pose-reg", fn=fn)


def fit_rig(rig: JointRig, joints: Dict[str, np.ndarray],
            iters: int = 30) -> JointRig:
    """Pose the rig so its joints land on the given targets."""
    matched = [n for n in rig.names if n in joints]
    if len(matched) < 4:
        raise RegistrationError("fit", f"only {len(matched)} usable joints")
    nj = rig.n_joints
    blocks = [make_fit_block(rig, joints), make_pose_reg_block(nj)]
    x0 = np.concatenate([rig.theta.ravel(), rig.translation])
    result = solve(blocks, x0, SolveOptions(max_iters=iters, damping=1e-6))
    theta = result.x[:3 * nj].reshape(nj, 3)
    return rig.with_pose(theta=theta, translation=result.x[3 * nj:])


# ------------------------------------------------------- shared machinery

class _StateHolder:
    """Mutable ED-graph state shared between blocks and the retraction."""

    def __init__(self, n_nodes: int):
        self.state = EDState.identity(n_nodes)

    def retract(self, x: np.ndarray) -> np.ndarray:
        self.state = self.state.apply_delta(x)
        return np.zeros_like(x)


def make_arap_block(graph: EDGraph, holder: _StateHolder,
                    weight: float) -> ResidualBlock:
    sw = np.sqrt(weight)

    def fn(x):
        r, J = arap_with_jacobian(graph, holder.state, x)
        return sw * r, sw * J

    return ResidualBlock(name="arap", fn=fn)


def gated_correspondences(points: np.ndarray, normals: np.ndarray,
                          scan_index: SpatialIndex, scan_normals: np.ndarray,
                          gate_dist: float, gate_cos: float) -> np.ndarray:
    """Indices of points whose nearest scan neighbor passes both gates,
    paired with that neighbor; returns (kept_ids, scan_ids)."""
    d, nn = scan_index.nearest(points, 1)
    d, nn = d[:, 0], nn[:, 0]
    dots = (normals * scan_normals[nn]).sum(axis=1)
    keep = (d <= gate_dist) & (dots >= gate_cos)
    return np.flatnonzero(keep), nn[keep]


def make_point_block(graph: EDGraph, holder: _StateHolder, src: np.ndarray,
                     bind, targets: np.ndarray, weight: float,
                     name: str = "point") -> ResidualBlock:
    sw = np.sqrt(weight)

    def fn(x):
        warped, J = warp_with_jacobian(graph, holder.state, x,
                                       points=src, bind=bind)
        return sw * (warped - targets).ravel(), sw * J

    return ResidualBlock(name=name, fn=fn)


def make_plane_block(graph: EDGraph, holder: _StateHolder, src: np.ndarray,
                     bind, targets: np.ndarray, target_normals: np.ndarray,
                     weight: float) -> ResidualBlock:
    sw = np.sqrt(weight)
    c = len(src)
    rows = np.repeat(np.arange(c), 3)
    cols = np.arange(3 * c)
    N = sp.coo_matrix((target_normals.ravel(), (rows, cols)),
                      shape=(c, 3 * c)).tocsr()

    def fn(x):
        warped, J = warp_with_jacobian(graph, holder.state, x,
                                       points=src, bind=bind)
        r = ((warped - targets) * target_normals).sum(axis=1)
        return sw * r, sw * (N @ J)

    return ResidualBlock(name="plane", fn=fn)


# ------------------------------------------------------ silhouette stage

def make_silhouette_block(graph: EDGraph, holder: _StateHolder,
                          cameras: Sequence[Camera], corr: dict
                          ) -> ResidualBlock:
    """2D point-to-plane residuals n_k^T (P_j(v_i) - p_k), pre-weighted."""
    vids = corr["vids"]
    cam_ids = corr["cam_ids"]
    pts = corr["points"]
    nrm = corr["normals"]
    sqw = corr["sqrt_weights"]
    src = graph.points[vids]
    bind = (graph.bind_idx[vids], graph.bind_w[vids])
    c = len(vids)
    groups = [np.flatnonzero(cam_ids == j) for j in range(len(cameras))]

    def fn(x):
        warped, Jw = warp_with_jacobian(graph, holder.state, x,
                                        points=src, bind=bind)
        r = np.zeros(c)
        a = np.zeros((c, 3))
        with np.errstate(divide="ignore", invalid="ignore"):
            for j, grp in enumerate(groups):
                if len(grp) == 0:
                    continue
                cam = cameras[j]
                pix, _ = cam.project(warped[grp])
                r[grp] = ((pix - pts[grp]) * nrm[grp]).sum(axis=1)
                Jp = cam.project_jacobian(warped[grp])     # (m, 2, 3)
                a[grp] = np.einsum("mi,mik->mk", nrm[grp], Jp)
        rows = np.repeat(np.arange(c), 3)
        cols = np.arange(3 * c)
        D = sp.coo_matrix(((sqw[:, None] * a).ravel(), (rows, cols)),
                          shape=(c, 3 * c)).tocsr()
        return sqw * r, D @ Jw

    return ResidualBlock(name="silhouette", fn=fn)


def _match_silhouettes(cameras: Sequence[Camera], scan_obs: List[SilhouetteObs],
                       mesh: TriMesh, cfg: RegistrationConfig) -> dict:
    """Scan boundary points -> nearest projected template vertex, gated."""
    gate_px = cfg.gate_distance_frac * cfg.resolution * np.sqrt(2.0)
    gate_cos = np.cos(np.deg2rad(cfg.gate_normal_deg))

    def per_camera(j: int):
        sobs = scan_obs[j]
        if sobs.n_points == 0:
            return None
        cam = cameras[j]
        _, tobs = render_silhouette(mesh, cam, camera_index=j,
                                    stride=cfg.silhouette_stride)
        if tobs.n_points == 0:
            return None
        pix, z = cam.project(mesh.vertices)
        front = np.flatnonzero(z > 1e-9)
        if len(front) == 0:
            return None
        vert_tree = cKDTree(pix[front])
        _, vi = vert_tree.query(tobs.points)
        contour_vids = front[vi]
        tree = cKDTree(tobs.points)
        d, ti = tree.query(sobs.points)
        ok = d <= gate_px
        ok &= (sobs.normals * tobs.normals[ti]).sum(axis=1) >= gate_cos
        if not ok.any():
            return None
        w = cam.weight / sobs.n_points
        return (contour_vids[ti[ok]], np.full(ok.sum(), j, dtype=np.int64),
                sobs.points[ok], sobs.normals[ok],
                np.full(ok.sum(), np.sqrt(w)))

    parts = [p for p in _pmap(per_camera, list(range(len(cameras)))) if p]
    if not parts:
        raise RegistrationError("silhouette", "no correspondences in any view")
    return {
        "vids": np.concatenate([p[0] for p in parts]),
        "cam_ids": np.concatenate([p[1] for p in parts]),
        "points": np.concatenate([p[2] for p in parts]),
        "normals": np.concatenate([p[3] for p in parts]),
        "sqrt_weights": np.concatenate([p[4] for p in parts]),
    }


@dataclass
class StageResult:
    vertices: np.ndarray
    energies: List[float]
    m_warp: Optional[np.ndarray] = None


def stage_silhouette(tpl_warped: TriMesh, scan: TriMesh, rig: CameraRig,
                     cfg: RegistrationConfig) -> StageResult:
    graph = build_ed_graph(tpl_warped.vertices,
                           min(cfg.nodes_silhouette, tpl_warped.n_vertices),
                           seed=cfg.seed, bind_k=cfg.bind_k,
                           graph_k=cfg.graph_k)
    holder = _StateHolder(graph.n_nodes)
    cameras = list(rig)
    scan_obs = [o for _, o in _pmap(
        lambda c: render_silhouette(scan, c[1], camera_index=c[0],
                                    stride=cfg.silhouette_stride),
        list(enumerate(cameras)))]

    energies: List[float] = []
    m_warp = None
    for it in range(cfg.icp_iters):
        mesh = tpl_warped.with_vertices(warp_points(graph, holder.state))
        corr = _match_silhouettes(cameras, scan_obs, mesh, cfg)
        blocks = [make_silhouette_block(graph, holder, cameras, corr),
                  make_arap_block(graph, holder, cfg.lambda_reg_s)]
        res = solve(blocks, np.zeros(graph.n_params), cfg.solve_options(),
                    retract=holder.retract)
        energies.append(res.cost)
        if it == 0:
            m_warp = warp_points(graph, holder.state)
    return StageResult(vertices=warp_points(graph, holder.state),
                       energies=energies, m_warp=m_warp)


# ----------------------------------------------------- point-cloud stage

def _scan_geometry(scan: TriMesh):
    normals = scan.normals if scan.normals is not None else vertex_normals(scan)
    return SpatialIndex(scan.vertices), normals


def stage_pointcloud(m_s: TriMesh, scan: TriMesh,
                     cfg: RegistrationConfig) -> StageResult:
    if scan.n_vertices < 3:
        raise RegistrationError("pointcloud", "scan has fewer than 3 points")
    graph = build_ed_graph(m_s.vertices,
                           min(cfg.nodes_pointcloud, m_s.n_vertices),
                           seed=cfg.seed, bind_k=cfg.bind_k,
                           graph_k=cfg.graph_k)
    holder = _StateHolder(graph.n_nodes)
    scan_index, scan_normals = _scan_geometry(scan)
    gate_dist = cfg.gate_distance_frac * scan.bbox_diagonal
    gate_cos = np.cos(np.deg2rad(cfg.gate_normal_deg))

    energies: List[float] = []
    for _ in range(cfg.icp_iters):
        V = warp_points(graph, holder.state)
        nrm = vertex_normals(m_s.with_vertices(V))
        kept, nn = gated_correspondences(V, nrm, scan_index, scan_normals,
                                         gate_dist, gate_cos)
        if len(kept) == 0:
            raise RegistrationError("pointcloud", "no gated correspondences")
        src = graph.points[kept]
        bind = (graph.bind_idx[kept], graph.bind_w[kept])
        tgt = scan.vertices[nn]
        tgt_n = scan_normals[nn]
        blocks = [
            make_point_block(graph, holder, src, bind, tgt, cfg.lambda_point_d),
            make_plane_block(graph, holder, src, bind, tgt, tgt_n,
                             cfg.lambda_plane_d),
            make_arap_block(graph, holder, cfg.lambda_reg_d),
        ]
        res = solve(blocks, np.zeros(graph.n_params), cfg.solve_options(),
                    retract=holder.retract)
        energies.append(res.cost)
    return StageResult(vertices=warp_points(graph, holder.state),
                       energies=energies)


# ------------------------------------------------------- per-vertex stage

def make_laplacian_block(mesh: TriMesh, weight: float) -> ResidualBlock:
    """Uniform Laplacian penalty on the per-vertex displacement field."""
    from .mesh import vertex_adjacency
    adj = vertex_adjacency(mesh)
    n = mesh.n_vertices
    rows, cols, data = [], [], []
    for i, nb in enumerate(adj):
        rows.append(i)
        cols.append(i)
        data.append(1.0)
        if len(nb):
            rows.extend([i] * len(nb))
            cols.extend(nb.tolist())
            data.extend([-1.0 / len(nb)] * len(nb))
    Ln = sp.coo_matrix((data, (rows, cols)), shape=(n, n))
    L = sp.kron(Ln, sp.eye(3), format="csr")
    sw = np.sqrt(weight)

    def fn(x):
        return sw * (L @ x), sw * L

    return ResidualBlock(name="smoothness", fn=fn)


def make_vertex_data_blocks(base: np.ndarray, kept: np.ndarray,
                            targets: np.ndarray, target_normals: np.ndarray,
                            w_point: float, w_plane: float
                            ) -> List[ResidualBlock]:
    n = len(base)
    c = len(kept)
    rows = np.arange(3 * c)
    cols = (3 * kept[:, None] + np.arange(3)).ravel()
    S = sp.coo_matrix((np.ones(3 * c), (rows, cols)), shape=(3 * c, 3 * n)).tocsr()
    nrows = np.repeat(np.arange(c), 3)
    N = sp.coo_matrix((target_normals.ravel(), (nrows, rows)),
                      shape=(c, 3 * c)).tocsr()
    NS = (N @ S).tocsr()
    sp_w, pl_w = np.sqrt(w_point), np.sqrt(w_plane)

    def point_fn(x):
        v = base[kept] + x.reshape(-1, 3)[kept]
        return sp_w * (v - targets).ravel(), sp_w * S

    def plane_fn(x):
        v = base[kept] + x.reshape(-1, 3)[kept]
        r = ((v - targets) * target_normals).sum(axis=1)
        return pl_w * r, pl_w * NS

    return [ResidualBlock(name="point", fn=point_fn),
            ResidualBlock(name="plane", fn=plane_fn)]


def stage_pervertex(m_d: TriMesh, scan: TriMesh,
                    cfg: RegistrationConfig) -> StageResult:
    if scan.n_vertices < 3:
        raise RegistrationError("pervertex", "scan has fewer than 3 points")
    scan_index, scan_normals = _scan_geometry(scan)
    gate_dist = cfg.gate_distance_frac * scan.bbox_diagonal
    gate_cos = np.cos(np.deg2rad(cfg.gate_normal_deg))
    lap = make_laplacian_block(m_d, cfg.lambda_reg_v)

    base = m_d.vertices
    d = np.zeros(3 * m_d.n_vertices)
    energies: List[float] = []
    for _ in range(cfg.icp_iters):
        V = base + d.reshape(-1, 3)
        nrm = vertex_normals(m_d.with_vertices(V))
        kept, nn = gated_correspondences(V, nrm, scan_index, scan_normals,
                                         gate_dist, gate_cos)
        if len(kept) == 0:
            raise RegistrationError("pervertex", "no gated correspondences")
        blocks = make_vertex_data_blocks(base, kept, scan.vertices[nn],
                                         scan_normals[nn],
                                         cfg.lambda_point_v,
                                         cfg.lambda_plane_v) + [lap]
        res = solve(blocks, d, cfg.solve_options())
        d = res.x
        energies.append(res.cost)
    return StageResult(vertices=base + d.reshape(-1, 3), energies=energies)


# -------------------------------------------------------------- full run

@dataclass
class AlignmentResult:
    m_warp: TriMesh
    m_s: TriMesh
    m_d: TriMesh
    m_v: TriMesh
    reports: Dict[str, MetricReport]
    energies: Dict[str, List[float]]
    fitted_rig: JointRig
    timings: Dict[str, float] = field(default_factory=dict)

    def meshes(self) -> Dict[str, TriMesh]:
        return {"m_warp": self.m_warp, "m_s": self.m_s,
                "m_d": self.m_d, "m_v": self.m_v}


def align_full(tpl: SkinnedTemplate, scan: TriMesh,
               joints3d: Dict[str, np.ndarray],
               cfg: Optional[RegistrationConfig] = None) -> AlignmentResult:
    cfg = cfg or RegistrationConfig()
    missing = [n for n in tpl.rig.names if n not in joints3d]
    if missing:
        raise RegistrationError("fit", f"missing joint '{missing[0]}'")

    timings: Dict[str, float] = {}
    t0 = time.perf_counter()
    posed = fit_rig(tpl.rig, joints3d, iters=cfg.fit_iters)
    m_t = skeletal_warp(tpl, posed)
    timings["fit"] = time.perf_counter() - t0

    rig_cams = build_camera_rig(np.stack(scan.bbox), joints3d,
                                resolution=cfg.resolution,
                                fill=cfg.fill_fraction)

    t0 = time.perf_counter()
    sil = stage_silhouette(m_t, scan, rig_cams, cfg)
    timings["silhouette"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    pc = stage_pointcloud(m_t.with_vertices(sil.vertices), scan, cfg)
    timings["pointcloud"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    pv = stage_pervertex(m_t.with_vertices(pc.vertices), scan, cfg)
    timings["pervertex"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    norm = scan.bbox_diagonal
    meshes = {
        "m_warp": m_t.with_vertices(sil.m_warp),
        "m_s": m_t.with_vertices(sil.vertices),
        "m_d": m_t.with_vertices(pc.vertices),
        "m_v": m_t.with_vertices(pv.vertices),
    }
    reports = {name: hausdorff_metrics(mesh, scan, normalizer=norm)
               for name, mesh in meshes.items()}
    timings["metrics"] = time.perf_counter() - t0

    return AlignmentResult(
        m_warp=meshes["m_warp"], m_s=meshes["m_s"], m_d=meshes["m_d"],
        m_v=meshes["m_v"], reports=reports,
        energies={"silhouette": sil.energies, "pointcloud": pc.energies,
                  "pervertex": pv.energies},
        fitted_rig=posed, timings=timings)


def save_alignment(result: AlignmentResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, mesh in result.meshes().items():
        save_mesh(out / f"{name}.ply", mesh)
    report = {
        "stages": {name: rep.as_dict() for name, rep in result.reports.items()},
        "energies": to_plain(result.energies),
        "timings_sec": to_plain(result.timings),
    }
    save_tree(out / "report.yaml", report)
