"""Virtual pinhole cameras surrounding a scan.

The rig is fixed at 30 views: two exactly-orthogonal cameras per garment
boundary part (neck + both wrists + both ankles), five views around each
torso half, and a ten-camera ring around the whole body. Torso views get
silhouette weight 0.5, everything else 1.0. Each camera picks its focal
length so the scan bounding box fills 80% of its image.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

REQUIRED_JOINTS = ("neck", "wrist_l", "wrist_r", "ankle_l", "ankle_r",
                   "hip_l", "hip_r", "shoulder_l", "shoulder_r")


@dataclass
class Camera:
    rotation: np.ndarray     # (3,3) world -> camera rows (right, down, forward)
    position: np.ndarray     # (3,) optical center in world
    focal: float
    cx: float
    cy: float
    resolution: int
    weight: float
    tag: str                 # torso | limb | boundary-pair

    @property
    def axis(self) -> np.ndarray:
        return self.rotation[2]

    def project(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Pixel coordinates and camera depths; callers gate on z > 0."""
        pc = (np.atleast_2d(points) - self.position) @ self.rotation.T
        z = pc[:, 2]
        pix = np.empty((len(pc), 2))
        pix[:, 0] = self.focal * pc[:, 0] / z + self.cx
        pix[:, 1] = self.focal * pc[:, 1] / z + self.cy
        return pix, z

    def project_jacobian(self, points: np.ndarray) -> np.ndarray:
        """(n, 2, 3) derivative of pixel coords w.r.t. world position."""
        pc = (np.atleast_2d(points) - self.position) @ self.rotation.T
        x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
        J = np.zeros((len(pc), 2, 3))
        J[:, 0, 0] = self.focal / z
        J[:, 0, 2] = -self.focal * x / z ** 2
        J[:, 1, 1] = self.focal / z
        J[:, 1, 2] = -self.focal * y / z ** 2
        return J @ self.rotation


@dataclass
class CameraRig:
    cameras: List[Camera]

    def __len__(self) -> int:
        return len(self.cameras)

    def __iter__(self):
        return iter(self.cameras)


def _look_at(eye: np.ndarray, target: np.ndarray) -> np.ndarray:
    fwd = target - eye
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 1.0, 0.0])
    if abs(fwd @ up) > 0.95:
        up = np.array([0.0, 0.0, 1.0])
    right = np.cross(up, fwd)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    return np.stack([right, down, fwd])


def _fit_focal(camera_rotation, eye, bbox, resolution, fill):
    mn, mx = bbox
    corners = np.array([[mn[0], mn[1], mn[2]], [mn[0], mn[1], mx[2]],
                        [mn[0], mx[1], mn[2]], [mn[0], mx[1], mx[2]],
                        [mx[0], mn[1], mn[2]], [mx[0], mn[1], mx[2]],
                        [mx[0], mx[1], mn[2]], [mx[0], mx[1], mx[2]]])
    pc = (corners - eye) @ camera_rotation.T
    ratio = np.abs(pc[:, :2] / pc[:, 2:3]).max()
    return fill * (resolution / 2.0) / ratio


def _make_camera(eye, axis, bbox, resolution, fill, weight, tag) -> Camera:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    R = _look_at(eye, eye + axis)
    f = _fit_focal(R, eye, bbox, resolution, fill)
    half = resolution / 2.0
    return Camera(rotation=R, position=np.asarray(eye, dtype=np.float64),
                  focal=f, cx=half, cy=half, resolution=resolution,
                  weight=weight, tag=tag)


def build_camera_rig(scan_bbox: np.ndarray, joints: Dict[str, np.ndarray],
                     resolution: int = 512, fill: float = 0.8) -> CameraRig:
    missing = [n for n in REQUIRED_JOINTS if n not in joints]
    if missing:
        raise ValueError(f"camera rig needs joint '{missing[0]}'")
    bbox = np.asarray(scan_bbox, dtype=np.float64)
    center = bbox.mean(axis=0)
    diag = float(np.linalg.norm(bbox[1] - bbox[0]))
    dist = 1.6 * diag

    cams: List[Camera] = []

    def add(eye, axis, weight, tag):
        cams.append(_make_camera(eye, axis, bbox, resolution, fill, weight, tag))

    # orthogonal pair per boundary part
    for part in ("neck", "wrist_l", "wrist_r", "ankle_l", "ankle_r"):
        p = np.asarray(joints[part], dtype=np.float64)
        for axis in ((0.0, 0.0, 1.0), (1.0, 0.0, 0.0)):
            axis = np.asarray(axis)
            add(p - dist * axis, axis, 1.0, "boundary-pair")

    # five views around each torso half
    upper = 0.5 * (np.asarray(joints["shoulder_l"]) + np.asarray(joints["shoulder_r"]))
    lower = 0.5 * (np.asarray(joints["hip_l"]) + np.asarray(joints["hip_r"]))
    for target, phase in ((upper, 0.0), (lower, np.pi / 5.0)):
        for i in range(5):
            a = 2.0 * np.pi * i / 5.0 + phase
            axis = np.array([np.cos(a), 0.0, np.sin(a)])
            add(target - dist * axis, axis, 0.5, "torso")

    # ring around the full body
    for i in range(10):
        a = 2.0 * np.pi * i / 10.0
        axis = np.array([np.cos(a), 0.0, np.sin(a)])
        add(center - dist * axis, axis, 1.0, "limb")

    rig = CameraRig(cameras=cams)
    assert len(rig) == 30
    return rig
