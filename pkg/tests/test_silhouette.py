import numpy as np
import pytest

from tightcap.cameras import REQUIRED_JOINTS, build_camera_rig
from tightcap.silhouette import render_silhouette

from conftest import icosphere


@pytest.fixture(scope="module")
def sphere_setup():
    sph = icosphere(3, 0.3, center=(0.0, 1.0, 0.0))
    joints = {n: np.array([0.0, 1.0, 0.0]) for n in REQUIRED_JOINTS}
    rig = build_camera_rig(np.stack(sph.bbox), joints, resolution=256)
    return sph, rig.cameras[-1]


def test_sphere_mask_is_a_disk(sphere_setup):
    sph, cam = sphere_setup
    mask, obs = render_silhouette(sph, cam)
    assert mask.shape == (256, 256)
    area = mask.sum()
    d = np.linalg.norm(cam.position - np.array([0.0, 1.0, 0.0]))
    r_pix = cam.focal * np.tan(np.arcsin(0.3 / d))
    assert area == pytest.approx(np.pi * r_pix ** 2, rel=0.05)


def test_boundary_points_on_the_rim(sphere_setup):
    sph, cam = sphere_setup
    mask, obs = render_silhouette(sph, cam)
    assert obs.n_points > 50
    d = np.linalg.norm(cam.position - np.array([0.0, 1.0, 0.0]))
    r_pix = cam.focal * np.tan(np.arcsin(0.3 / d))
    radii = np.linalg.norm(obs.points - [cam.cx, cam.cy], axis=1)
    assert np.abs(radii - r_pix).max() < 4.0  # contour quantizes to pixels


def test_boundary_normals_point_outward(sphere_setup):
    sph, cam = sphere_setup
    _, obs = render_silhouette(sph, cam)
    radial = obs.points - np.array([cam.cx, cam.cy])
    radial /= np.linalg.norm(radial, axis=1, keepdims=True)
    dots = np.sum(obs.normals * radial, axis=1)
    assert np.mean(dots > 0.5) > 0.95
    assert np.allclose(np.linalg.norm(obs.normals, axis=1), 1.0, atol=1e-9)


def test_stride_thins_boundary(sphere_setup):
    sph, cam = sphere_setup
    _, full = render_silhouette(sph, cam)
    _, thin = render_silhouette(sph, cam, stride=4)
    assert 0 < thin.n_points <= full.n_points // 3


def test_camera_index_is_carried(sphere_setup):
    sph, cam = sphere_setup
    _, obs = render_silhouette(sph, cam, camera_index=17)
    assert obs.camera_index == 17


def test_empty_mesh_yields_empty_obs(sphere_setup):
    from tightcap import TriMesh
    _, cam = sphere_setup
    empty = TriMesh(np.zeros((3, 3)), np.zeros((0, 3), dtype=np.int64))
    mask, obs = render_silhouette(empty, cam)
    assert mask.sum() == 0 and obs.n_points == 0
