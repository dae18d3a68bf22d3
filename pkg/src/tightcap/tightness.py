"""Clothing-tightness estimation and prediction.

All tightness vectors here point clothing -> body, so the inner shape is
recovered by *adding* the field to the clothed layer. Estimation gathers,
for every clothed vertex, body vertices inside a double cone around the
vertex normal plus its K nearest neighbours, and averages the offset
vectors under a Gaussian weight on the normal angle.

Also hosts the non-learned baseline predictor (local tube-diameter excess
against a naked-body prior, plus fixed UV-band garment masks) and the
subprocess bridge to an external learned predictor speaking CGI1 files.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import cv2
import numpy as np

from .geomimage import GeometryImage, GIError, rasterize_gi, read_gi, write_gi
from .mesh import TriMesh, vertex_normals
from .spatial import SpatialIndex
from .template import SkinnedTemplate

NORMALIZATIONS = ("weight-sum", "count")


@dataclass
class TightnessConfig:
    cone_aperture_deg: float = 30.0
    knn_k: int = 20
    kernel_sigma_deg: float = 15.0
    normalization: str = "weight-sum"

    def __post_init__(self):
        if not 0.0 < self.cone_aperture_deg <= 360.0:
            raise ValueError(
                f"cone aperture must be in (0, 360], got {self.cone_aperture_deg}")
        if self.knn_k < 1:
            raise ValueError(f"knn_k must be >= 1, got {self.knn_k}")
        if self.kernel_sigma_deg <= 0.0:
            raise ValueError(f"kernel sigma must be > 0, got {self.kernel_sigma_deg}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(
                f"normalization must be one of {NORMALIZATIONS}, "
                f"got '{self.normalization}'")


@dataclass
class TightnessField:
    """Per-vertex displacement from the clothed surface to the body surface."""

    vectors: np.ndarray           # (n, 3) float64, meters
    fallback: np.ndarray = None   # (n,) bool, True where estimation degraded

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[1] != 3:
            raise ValueError(f"vectors must be (n, 3), got {self.vectors.shape}")
        if not np.isfinite(self.vectors).all():
            raise ValueError("tightness vectors must be finite")
        if self.fallback is None:
            self.fallback = np.zeros(len(self.vectors), dtype=bool)
        else:
            self.fallback = np.asarray(self.fallback, dtype=bool)
            if self.fallback.shape != (len(self.vectors),):
                raise ValueError("fallback flags must be one bool per vertex")

    @property
    def n_vertices(self) -> int:
        return len(self.vectors)

    def magnitudes(self) -> np.ndarray:
        return np.linalg.norm(self.vectors, axis=1)


def naive_tightness(clothed_vertices: np.ndarray,
                    body_vertices: np.ndarray) -> TightnessField:
    """Two-template formulation: plain per-vertex difference body - clothed."""
    clothed = np.asarray(clothed_vertices, dtype=np.float64)
    body = np.asarray(body_vertices, dtype=np.float64)
    if clothed.shape != body.shape:
        raise ValueError(
            f"layer shapes differ: clothed {clothed.shape} vs body {body.shape}")
    return TightnessField(body - clothed)


def angular_gaussian_weight(n1: np.ndarray, n2: np.ndarray,
                            sigma_deg: float = 15.0):
    """exp(-theta^2 / 2 sigma^2) with theta the normal angle in degrees.

    Either argument may be a batch (m, 3); unit length is enforced to 1e-3.
    """
    n1 = np.asarray(n1, dtype=np.float64)
    n2 = np.asarray(n2, dtype=np.float64)
    for tag, n in (("n1", n1), ("n2", n2)):
        lens = np.linalg.norm(n, axis=-1)
        if np.any(np.abs(lens - 1.0) > 1e-3):
            raise ValueError(f"{tag} is not unit length (|len-1| > 1e-3)")
    cross = np.cross(n1, n2)
    dot = np.sum(n1 * n2, axis=-1)
    theta = np.degrees(np.arctan2(np.linalg.norm(cross, axis=-1), dot))
    return np.exp(-(theta * theta) / (2.0 * sigma_deg * sigma_deg))


def _mesh_normals(mesh: TriMesh) -> np.ndarray:
    if mesh.normals is not None:
        return np.asarray(mesh.normals, dtype=np.float64)
    return vertex_normals(mesh)


def one_to_many_tightness(vertices: np.ndarray, normals: np.ndarray,
                          body: TriMesh,
                          cfg: Optional[TightnessConfig] = None) -> TightnessField:
    """Cone+KNN gather from one layer's vertices onto the other layer's mesh."""
    cfg = cfg or TightnessConfig()
    vertices = np.asarray(vertices, dtype=np.float64)
    normals = np.asarray(normals, dtype=np.float64)
    if vertices.shape != normals.shape or vertices.ndim != 2:
        raise ValueError("vertices and normals must both be (n, 3)")
    body_v = np.asarray(body.vertices, dtype=np.float64)
    body_n = _mesh_normals(body)
    index = SpatialIndex(body_v)
    k = min(cfg.knn_k, len(body_v))

    out = np.zeros_like(vertices)
    flagged = np.zeros(len(vertices), dtype=bool)
    for i in range(len(vertices)):
        v = vertices[i]
        cone_ids = index.cone_query(v, normals[i], cfg.cone_aperture_deg)
        knn_ids = index.knn_query(v, k)
        ids = np.union1d(cone_ids, knn_ids)
        denom = None
        if ids.size:
            w = angular_gaussian_weight(normals[i], body_n[ids],
                                        cfg.kernel_sigma_deg)
            if cfg.normalization == "count":
                denom = float(cone_ids.size + knn_ids.size)
            else:
                denom = float(w.sum())
        if ids.size == 0 or denom <= 1e-12:
            nn = index.knn_query(v, 1)
            out[i] = body_v[nn[0]] - v
            flagged[i] = True
            continue
        diffs = body_v[ids] - v
        out[i] = (w[:, None] * diffs).sum(axis=0) / denom
    return TightnessField(out, flagged)


def bidirectional_tightness(clothed_tpl: TriMesh, body_tpl: TriMesh,
                            body_mesh: TriMesh, clothed_mesh: TriMesh,
                            cfg: Optional[TightnessConfig] = None) -> TightnessField:
    """Symmetric average of the clothed->body and body->clothed estimates.

    Both template layers share vertex indexing, so the backward field can be
    negated per vertex into the clothing->body direction.
    """
    if clothed_tpl.n_vertices != body_tpl.n_vertices:
        raise ValueError("template layers must share topology")
    forward = one_to_many_tightness(clothed_tpl.vertices,
                                    _mesh_normals(clothed_tpl), body_mesh, cfg)
    backward = one_to_many_tightness(body_tpl.vertices,
                                     _mesh_normals(body_tpl), clothed_mesh, cfg)
    vectors = (forward.vectors - backward.vectors) / 2.0
    return TightnessField(vectors, forward.fallback | backward.fallback)


def tightness_to_gi(tpl: SkinnedTemplate, field: TightnessField,
                    labels: np.ndarray, res: int = 224) -> GeometryImage:
    """Bake a tightness field and garment-label indicator masks into a GI."""
    if field.n_vertices != tpl.n_vertices:
        raise ValueError(
            f"field has {field.n_vertices} vertices, template has {tpl.n_vertices}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (tpl.n_vertices,):
        raise ValueError("labels must be one int per template vertex")
    attrs = {
        "tightness": field.vectors,
        "mask.upper": (labels == 1).astype(np.float64),
        "mask.lower": (labels == 2).astype(np.float64),
    }
    return rasterize_gi(tpl, attrs, res=res)


# ------------------------------------------------- baseline predictor

@dataclass
class BaselinePredictConfig:
    """Geometric stand-in for the learned predictor.

    Looseness is read as the excess of the local surface tube diameter over
    the same texel's diameter on a naked default body (measured with an
    identical probe), halved to convert diameter excess into offset.
    """

    max_magnitude: float = 0.15       # clamp, meters
    blur_sigma_px: float = 2.0
    probe_start: float = 0.015        # march range along -normal, meters
    probe_step: float = 0.0075
    probe_max: float = 0.5
    hit_radius: float = 0.03          # NN acceptance around the probe point
    min_thickness: float = 0.02       # reject self-hits closer than this
    category: str = "default"         # "no-lower" zeroes the lower mask
    mask_in: float = 0.9
    mask_out: float = 0.02

    def __post_init__(self):
        if self.category not in ("default", "no-lower"):
            raise ValueError(f"unknown garment category '{self.category}'")
        if self.probe_step <= 0 or self.probe_max <= self.probe_start:
            raise ValueError("probe schedule must advance")


@dataclass
class PredictionOutput:
    gi: GeometryImage
    provenance: str   # "baseline" | "external"


def diameter_map(gi: GeometryImage, cfg: Optional[BaselinePredictConfig] = None
                 ) -> np.ndarray:
    """Per-texel surface tube diameter, probed inward along the normal.

    Marches from each valid texel along -normal and takes the first probe
    point whose nearest surface sample lies behind the texel (opposite side
    of the tube) and at least min_thickness away. Unresolved texels get 0.
    """
    cfg = cfg or BaselinePredictConfig()
    for name in ("position.x", "normal.x", "valid"):
        if not gi.has(name):
            raise GIError(f"diameter probe needs channel '{name}'")
    valid = gi.plane("valid") > 0.5
    pos = gi.vector("position").astype(np.float64)[valid]
    nrm = gi.vector("normal").astype(np.float64)[valid]
    lens = np.linalg.norm(nrm, axis=1, keepdims=True)
    nrm = nrm / np.maximum(lens, 1e-12)

    # all march points at once: one batched lookup instead of per-step loops;
    # the hit radius bounds the search so tree descent prunes interior misses
    ts = np.arange(cfg.probe_start, cfg.probe_max, cfg.probe_step)
    n, m = len(pos), len(ts)
    probes = (pos[:, None, :] - ts[None, :, None] * nrm[:, None, :])
    index = SpatialIndex(pos)
    nn_d, nn_i = index.nearest(probes.reshape(-1, 3),
                               max_distance=cfg.hit_radius)
    hit_pt = pos[np.minimum(nn_i[:, 0], n - 1)].reshape(n, m, 3)
    rel = pos[:, None, :] - hit_pt
    dist = np.linalg.norm(rel, axis=2)
    accept = ((nn_d[:, 0].reshape(n, m) < cfg.hit_radius)
              & (dist >= cfg.min_thickness)
              & (np.sum(rel * nrm[:, None, :], axis=2) >= 0.5 * dist))
    first = np.argmax(accept, axis=1)
    diam = np.where(accept.any(axis=1), dist[np.arange(n), first], 0.0)

    out = np.zeros((gi.height, gi.width))
    out[valid] = diam
    return out


_PRIOR_CACHE: Dict[int, dict] = {}


def _naked_prior(res: int) -> dict:
    """Diameter map + garment-band UV radii of the default naked body."""
    if res in _PRIOR_CACHE:
        return _PRIOR_CACHE[res]
    from .synthbody import generate_synthetic_template

    tpl = generate_synthetic_template()
    attrs = {"position": tpl.mesh.vertices, "normal": vertex_normals(tpl.mesh)}
    gi = rasterize_gi(tpl, attrs, res=res)
    radius = np.linalg.norm(tpl.uv - 0.5, axis=1)
    rings = tpl.boundary_rings
    prior = {
        "diam": diameter_map(gi),
        "r_neck": float(radius[rings["neck"]].mean()),
        "r_waist": float(radius[rings["waist"]].mean()),
        "r_ankle": float(max(radius[rings["ankle_l"]].max(),
                             radius[rings["ankle_r"]].max())),
    }
    _PRIOR_CACHE[res] = prior
    return prior


def _band_masks(gi: GeometryImage, prior: dict,
                cfg: BaselinePredictConfig) -> Dict[str, np.ndarray]:
    ix = (np.arange(gi.width) + 0.5) / gi.width - 0.5
    iy = (np.arange(gi.height) + 0.5) / gi.height - 0.5
    r = np.hypot(ix[None, :], iy[:, None])
    upper = np.where((r > prior["r_neck"]) & (r <= prior["r_waist"]),
                     cfg.mask_in, cfg.mask_out)
    lower = np.where((r > prior["r_waist"]) & (r <= prior["r_ankle"]),
                     cfg.mask_in, cfg.mask_out)
    if cfg.category == "no-lower":
        lower = np.zeros_like(lower)
    invalid = gi.plane("valid") <= 0.5
    upper[invalid] = 0.0
    lower[invalid] = 0.0
    return {"mask.upper": upper, "mask.lower": lower}


def baseline_predict(gi: GeometryImage,
                     cfg: Optional[BaselinePredictConfig] = None) -> PredictionOutput:
    cfg = cfg or BaselinePredictConfig()
    for name in ("position.x", "normal.x", "valid"):
        if not gi.has(name):
            raise GIError(f"baseline predictor needs channel '{name}'")
    if gi.width != gi.height:
        raise GIError("baseline predictor expects a square image")
    prior = _naked_prior(gi.width)

    excess = np.clip((diameter_map(gi, cfg) - prior["diam"]) / 2.0,
                     0.0, cfg.max_magnitude)
    validf = (gi.plane("valid") > 0.5).astype(np.float64)
    num = cv2.GaussianBlur(excess * validf, (0, 0), cfg.blur_sigma_px)
    den = cv2.GaussianBlur(validf, (0, 0), cfg.blur_sigma_px)
    magnitude = np.where(den > 1e-6, num / np.maximum(den, 1e-6), 0.0) * validf

    nrm = gi.vector("normal").astype(np.float64)
    tight = -magnitude[..., None] * nrm

    channels = {f"tightness.{c}": tight[..., i].astype(np.float32)
                for i, c in enumerate("xyz")}
    for name, plane in _band_masks(gi, prior, cfg).items():
        channels[name] = plane.astype(np.float32)
    channels["valid"] = gi.plane("valid").copy()
    ordered = {n: channels[n] for n in
               ("tightness.x", "tightness.y", "tightness.z",
                "mask.upper", "mask.lower", "valid")}
    out = GeometryImage(width=gi.width, height=gi.height, channels=ordered,
                        uv_version=gi.uv_version)
    return PredictionOutput(gi=out, provenance="baseline")


# ------------------------------------------------- external predictor bridge

class BridgeError(RuntimeError):
    pass


_REQUIRED_OUT = ("tightness.x", "tightness.y", "tightness.z",
                 "mask.upper", "mask.lower", "valid")


def external_predict(gi: GeometryImage, bridge: str,
                     timeout: float = 600.0,
                     workdir=None) -> PredictionOutput:
    """Run an external predictor over a CGI1 file pair.

    `bridge` is a command template with {input} and {output} placeholders.
    """
    if "{input}" not in bridge or "{output}" not in bridge:
        raise ValueError("bridge template must contain {input} and {output}")
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        in_path = Path(tmp) / "predictor_input.cgi"
        out_path = Path(tmp) / "predictor_output.cgi"
        write_gi(gi, in_path)
        cmd = bridge.format(input=str(in_path), output=str(out_path))
        try:
            proc = subprocess.run(shlex.split(cmd), capture_output=True,
                                  text=True, timeout=timeout)
        except subprocess.TimeoutExpired:
            raise BridgeError(f"bridge timed out after {timeout:.0f}s: {cmd}")
        if proc.returncode != 0:
            tail = (proc.stderr or proc.stdout or "").strip()[-2000:]
            raise BridgeError(
                f"bridge exited with code {proc.returncode}: {cmd}\n{tail}")
        if not out_path.exists():
            raise BridgeError(f"bridge produced no output file: {cmd}")
        try:
            out = read_gi(out_path)
        except GIError as exc:
            raise BridgeError(f"bridge output unreadable: {exc}") from exc
    missing = [name for name in _REQUIRED_OUT if not out.has(name)]
    if missing:
        raise BridgeError(f"bridge output missing channels {missing}")
    if (out.width, out.height) != (gi.width, gi.height):
        raise BridgeError(
            f"bridge output resolution {out.width}x{out.height} != input "
            f"{gi.width}x{gi.height}")
    if out.uv_version != gi.uv_version:
        raise BridgeError(
            f"bridge output uv version {out.uv_version:#010x} != input "
            f"{gi.uv_version:#010x}")
    return PredictionOutput(gi=out, provenance="external")
