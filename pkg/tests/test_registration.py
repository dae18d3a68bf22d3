"""Rig fitting, correspondence gating, and the staged alignment loop."""

import numpy as np
import pytest

from tightcap import (RegistrationConfig, SpatialIndex, align_full,
                      check_gradient, fit_rig, make_clothed_fixture)
from tightcap.registration import (RegistrationError, gated_correspondences,
                                   load_joints, make_fit_block,
                                   make_laplacian_block, save_alignment,
                                   save_joints)
from tightcap.synthbody import SynthSpec


def test_fit_rig_reaches_posed_joints(default_template):
    rig = default_template.rig
    theta = np.zeros((rig.n_joints, 3))
    theta[rig.index("spine")] = (0.2, 0.1, 0.0)
    theta[rig.index("shoulder_l")] = (0.0, 0.0, 0.4)
    theta[rig.index("knee_r")] = (0.3, 0.0, 0.0)
    posed = rig.with_pose(theta=theta, translation=np.array([0.05, 0.0, -0.02]))
    _, target_pos = posed.posed_joints()
    targets = {name: target_pos[i] for i, name in enumerate(rig.names)}
    fitted = fit_rig(rig, targets)
    _, got = fitted.posed_joints()
    # the small pose regularizer leaves a sub-millimeter equilibrium offset
    assert np.abs(got - target_pos).max() < 5e-4


def test_fit_rig_partial_targets(default_template):
    rig = default_template.rig
    _, rest = rig.posed_joints()
    targets = {n: rest[rig.index(n)] for n in rig.names[:5]}
    fitted = fit_rig(rig, targets)
    _, got = fitted.posed_joints()
    assert np.abs(got - rest).max() < 1e-4


def test_fit_rig_needs_four_joints(default_template):
    rig = default_template.rig
    _, rest = rig.posed_joints()
    with pytest.raises(RegistrationError):
        fit_rig(rig, {n: rest[rig.index(n)] for n in rig.names[:3]})


def test_fit_block_gradient(default_template, rng):
    rig = default_template.rig
    _, rest = rig.posed_joints()
    targets = {n: rest[rig.index(n)] + 0.05 for n in rig.names}
    block = make_fit_block(rig, targets)
    x = 0.1 * rng.standard_normal(3 * rig.n_joints + 3)
    assert check_gradient(block, x).ok


def test_laplacian_block_gradient(small_template, rng):
    block = make_laplacian_block(small_template.mesh, 0.7)
    x = rng.standard_normal(3 * small_template.mesh.n_vertices)
    assert check_gradient(block, x).ok


def test_laplacian_zero_on_constant_shift(small_template):
    block = make_laplacian_block(small_template.mesh, 1.0)
    shift = np.tile([0.3, -0.1, 0.7], small_template.mesh.n_vertices)
    r, _ = block(shift)
    assert np.abs(r).max() < 1e-12


def test_joints_io_round_trip(tmp_path):
    joints = {"neck": np.array([0.0, 1.5, 0.01]),
              "wrist_l": np.array([0.6, 1.1, -0.02])}
    path = tmp_path / "joints.txt"
    save_joints(path, joints)
    text = path.read_text()
    path.write_text("# comment line\n\n" + text)
    back = load_joints(path)
    assert set(back) == set(joints)
    for name in joints:
        assert np.abs(back[name] - joints[name]).max() < 1e-8


def test_load_joints_rejects_short_record(tmp_path):
    path = tmp_path / "joints.txt"
    path.write_text("neck 0.0 1.5\n")
    with pytest.raises(ValueError, match="joints.txt:1"):
        load_joints(path)


def test_gated_correspondences_filters(rng):
    scan_pts = np.stack([np.linspace(0, 1, 50), np.zeros(50), np.zeros(50)],
                        axis=1)
    scan_normals = np.tile([0.0, 0.0, 1.0], (50, 1))
    index = SpatialIndex(scan_pts)
    pts = np.array([[0.5, 0.0, 0.01],    # near, aligned -> kept
                    [0.5, 0.0, 5.0],     # far -> dropped
                    [0.7, 0.0, -0.01]])  # near, flipped -> dropped
    nrm = np.array([[0.0, 0.0, 1.0],
                    [0.0, 0.0, 1.0],
                    [0.0, 0.0, -1.0]])
    kept, nn = gated_correspondences(pts, nrm, index, scan_normals,
                                     gate_dist=0.1, gate_cos=0.5)
    assert kept.tolist() == [0]
    assert np.abs(scan_pts[nn[0]] - [0.5, 0.0, 0.0]).max() < 0.02


def small_alignment_config():
    return RegistrationConfig(nodes_silhouette=120, nodes_pointcloud=240,
                              icp_iters=2, gn_iters=2, fit_iters=20,
                              resolution=160, silhouette_stride=4, seed=0)


@pytest.fixture(scope="module")
def tiny_alignment():
    fx = make_clothed_fixture(SynthSpec(rings_mid=20, segments=36),
                              upper_offset=0.02, lower_offset=0.02,
                              pose="rest", seed=5)
    return fx, align_full(fx.template, fx.scan, fx.joints,
                          small_alignment_config())


def test_align_full_reports_and_timings(tiny_alignment):
    _, result = tiny_alignment
    assert set(result.reports) == {"m_warp", "m_s", "m_d", "m_v"}
    assert set(result.timings) == {"fit", "silhouette", "pointcloud",
                                   "pervertex", "metrics"}
    chain = [result.reports[k].mean for k in ("m_warp", "m_s", "m_d", "m_v")]
    assert chain[-1] < chain[0]          # refinement helps overall
    assert chain[-1] < 0.02              # within 2% of bbox diagonal


def test_align_full_stage_energies_recorded(tiny_alignment):
    _, result = tiny_alignment
    for stage in ("silhouette", "pointcloud", "pervertex"):
        assert len(result.energies[stage]) >= 1
        assert all(np.isfinite(result.energies[stage]))


def test_align_full_preserves_topology(tiny_alignment):
    fx, result = tiny_alignment
    for mesh in result.meshes().values():
        assert np.array_equal(mesh.faces, fx.template.mesh.faces)


def test_align_full_requires_all_rig_joints(tiny_alignment):
    fx, _ = tiny_alignment
    joints = dict(fx.joints)
    joints.pop("neck")
    with pytest.raises(RegistrationError, match="neck"):
        align_full(fx.template, fx.scan, joints, small_alignment_config())


def test_save_alignment_writes_outputs(tiny_alignment, tmp_path):
    _, result = tiny_alignment
    save_alignment(result, tmp_path / "out")
    for name in ("m_warp", "m_s", "m_d", "m_v"):
        assert (tmp_path / "out" / f"{name}.ply").exists()
    report = (tmp_path / "out" / "report.yaml").read_text()
    assert "stages" in report and "timings_sec" in report
