import numpy as np
import pytest

from tightcap.synthbody import POSE_PRESETS, make_clothed_fixture, pose_rig


def test_fixture_shares_topology(clothed_fixture):
    fix = clothed_fixture
    assert fix.scan.n_vertices == fix.body.n_vertices == fix.template.n_vertices
    assert np.array_equal(fix.scan.faces, fix.body.faces)
    assert set(np.unique(fix.labels)) <= {0, 1, 2}
    assert (fix.labels == 1).sum() > 100
    assert (fix.labels == 2).sum() > 100


def test_offsets_point_outward_with_requested_magnitude(clothed_fixture):
    fix = clothed_fixture
    d = fix.scan.vertices - fix.body.vertices
    mag = np.linalg.norm(d, axis=1)
    # skin moves nowhere; garment interiors sit at the full offset
    assert mag[fix.labels == 0].max() < 1e-12
    clothed = fix.labels > 0
    assert mag[clothed].max() <= 0.03 + 1e-9
    assert np.percentile(mag[clothed], 60) == pytest.approx(0.03, rel=1e-6)
    # displacement along the body normal
    along = np.sum(d[clothed] * fix.body.normals[clothed], axis=1)
    assert np.all(along >= -1e-12)


def test_no_lower_category_has_no_lower_labels():
    fix = make_clothed_fixture(upper_offset=0.03, lower_offset=0.0, seed=1)
    assert (fix.labels == 2).sum() == 0
    assert (fix.labels == 1).sum() > 100


def test_seeded_noise_is_deterministic():
    a = make_clothed_fixture(noise=0.004, seed=9)
    b = make_clothed_fixture(noise=0.004, seed=9)
    c = make_clothed_fixture(noise=0.004, seed=10)
    assert np.array_equal(a.scan.vertices, b.scan.vertices)
    assert not np.array_equal(a.scan.vertices, c.scan.vertices)


def test_pose_presets_produce_distinct_bodies():
    bodies = {}
    for pose in POSE_PRESETS:
        fix = make_clothed_fixture(pose=pose, seed=0)
        bodies[pose] = fix.body.vertices
    names = list(bodies)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            assert np.abs(bodies[a] - bodies[b]).max() > 0.01


def test_translation_moves_everything():
    base = make_clothed_fixture(seed=0)
    moved = make_clothed_fixture(seed=0, translation=(0.3, 0.0, -0.2))
    shift = moved.scan.vertices - base.scan.vertices
    assert np.allclose(shift, [0.3, 0.0, -0.2], atol=1e-9)
    for name in base.joints:
        assert np.allclose(moved.joints[name] - base.joints[name],
                           [0.3, 0.0, -0.2], atol=1e-9)


def test_unknown_pose_rejected(default_template):
    with pytest.raises(ValueError):
        pose_rig(default_template.rig, "cartwheel")
