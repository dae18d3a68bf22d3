"""Silhouette mask rendering and boundary observation extraction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import cv2
import numpy as np

from .cameras import Camera
from .mesh import TriMesh

_SHIFT = 4  # cv2 subpixel bits


@dataclass
class SilhouetteObs:
    camera_index: int
    points: np.ndarray    # (m, 2) pixel coordinates on the mask boundary
    normals: np.ndarray   # (m, 2) unit, pointing out of the mask

    @property
    def n_points(self) -> int:
        return len(self.points)


def _empty_obs(camera_index: int) -> SilhouetteObs:
    return SilhouetteObs(camera_index, np.zeros((0, 2)), np.zeros((0, 2)))


def render_silhouette(mesh: TriMesh, camera: Camera,
                      resolution: Optional[int] = None,
                      camera_index: int = -1,
                      stride: int = 1) -> Tuple[np.ndarray, SilhouetteObs]:
    res = resolution or camera.resolution
    mask = np.zeros((res, res), dtype=np.uint8)
    if mesh.n_faces == 0:
        return mask, _empty_obs(camera_index)
    pix, z = camera.project(mesh.vertices)
    ok = z > 1e-9
    face_ok = ok[mesh.faces].all(axis=1)
    if not face_ok.any():
        return mask, _empty_obs(camera_index)
    scale = float(1 << _SHIFT)
    pts = np.round(pix * scale).astype(np.int32)
    polys = pts[mesh.faces[face_ok]]               # (m, 3, 2)
    # one call per triangle: batched fillPoly XORs overlapping polygons
    # (even-odd rule), which would punch holes into the union
    for tri in polys:
        cv2.fillConvexPoly(mask, tri, 1, lineType=cv2.LINE_8, shift=_SHIFT)

    contours, _ = cv2.findContours(mask, cv2.RETR_LIST, cv2.CHAIN_APPROX_NONE)
    points, normals = [], []
    for contour in contours:
        c = contour[:, 0, :].astype(np.float64)    # (k, 2) as (x, y)
        k = len(c)
        if k < 8:
            continue
        tang = np.roll(c, -1, axis=0) - np.roll(c, 1, axis=0)
        nt = np.linalg.norm(tang, axis=1)
        keep = nt > 1e-12
        n2 = np.stack([tang[:, 1], -tang[:, 0]], axis=1)
        n2[keep] /= nt[keep, None]
        # orient outward: the mask must drop along +n
        probe_out = np.clip(np.round(c + 1.5 * n2).astype(int), 0, res - 1)
        probe_in = np.clip(np.round(c - 1.5 * n2).astype(int), 0, res - 1)
        out_v = mask[probe_out[:, 1], probe_out[:, 0]]
        in_v = mask[probe_in[:, 1], probe_in[:, 0]]
        flip = (out_v == 1) & (in_v == 0)
        n2[flip] *= -1.0
        conclusive = keep & ((out_v == 0) & (in_v == 1) | flip)
        sel = np.flatnonzero(conclusive)[::stride]
        points.append(c[sel])
        normals.append(n2[sel])
    if points:
        obs = SilhouetteObs(camera_index,
                            np.concatenate(points), np.concatenate(normals))
    else:
        obs = _empty_obs(camera_index)
    return mask, obs
