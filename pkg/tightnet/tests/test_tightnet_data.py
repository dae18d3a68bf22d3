import numpy as np
import pytest

from tightnet.cgi import ChannelImage, write_cgi
from tightnet.data import (DatasetError, discover_pairs, input_planes,
                           load_dataset, target_planes)

from tnhelpers import RES, UV, synthetic_pair, write_pairs


@pytest.fixture
def pair_dir(tmp_path):
    write_pairs(tmp_path, 3)
    return tmp_path


def test_discovery_sorts_by_stem(pair_dir):
    pairs = discover_pairs(pair_dir)
    assert [p[0].name for p in pairs] == [
        "pair_0000_input.cgi", "pair_0001_input.cgi", "pair_0002_input.cgi"]
    assert all(t.name.endswith("_target.cgi") for _, t in pairs)


def test_orphan_input_is_an_error(pair_dir):
    (pair_dir / "pair_0002_target.cgi").unlink()
    with pytest.raises(DatasetError, match="no target"):
        discover_pairs(pair_dir)


def test_orphan_target_is_an_error(pair_dir):
    (pair_dir / "pair_0001_input.cgi").unlink()
    with pytest.raises(DatasetError, match="no input"):
        discover_pairs(pair_dir)


def test_missing_directory_is_an_error(tmp_path):
    with pytest.raises(DatasetError, match="not a directory"):
        discover_pairs(tmp_path / "nope")


def test_empty_directory_is_an_error(tmp_path):
    with pytest.raises(DatasetError, match="no .*pairs"):
        load_dataset(tmp_path, 20.0)


def test_mixed_resolution_fails_before_training(pair_dir):
    gi_in, gi_tgt = synthetic_pair(res=RES * 2, seed=9)
    write_cgi(gi_in, pair_dir / "pair_0009_input.cgi")
    write_cgi(gi_tgt, pair_dir / "pair_0009_target.cgi")
    with pytest.raises(DatasetError, match="resolution"):
        load_dataset(pair_dir, 20.0)


def test_mixed_uv_version_fails_before_training(pair_dir):
    gi_in, gi_tgt = synthetic_pair(uv_version=UV + 1, seed=9)
    write_cgi(gi_in, pair_dir / "pair_0009_input.cgi")
    write_cgi(gi_tgt, pair_dir / "pair_0009_target.cgi")
    with pytest.raises(DatasetError, match="uv version"):
        load_dataset(pair_dir, 20.0)


def test_input_channel_gap_is_an_error(tmp_path):
    gi_in, gi_tgt = synthetic_pair(seed=0)
    del gi_in.channels["color.g"]
    write_cgi(gi_in, tmp_path / "pair_0000_input.cgi")
    write_cgi(gi_tgt, tmp_path / "pair_0000_target.cgi")
    with pytest.raises(DatasetError, match="color.g"):
        load_dataset(tmp_path, 20.0)


def test_loaded_tensors_have_expected_layout(pair_dir):
    ds = load_dataset(pair_dir, 20.0)
    assert ds.inputs.shape == (3, 8, RES, RES)
    assert ds.targets.shape == (3, 5, RES, RES)
    assert ds.valid.shape == (3, 1, RES, RES)
    assert ds.uv_version == UV
    assert ds.stems == ["pair_0000", "pair_0001", "pair_0002"]


def test_input_planes_are_normalized_and_masked():
    gi_in, _ = synthetic_pair(seed=2)
    planes = input_planes(gi_in)
    valid = gi_in.plane("valid") > 0.5
    # positions fit a unit ball around the coverage centroid
    r = np.linalg.norm(planes[:3], axis=0)
    assert r[valid].max() <= 1.0 + 1e-6
    # background is zero on every plane
    assert not planes[:, ~valid].any()
    # the coverage plane is the mask itself
    assert np.array_equal(planes[7], valid.astype(np.float32))


def test_target_planes_scale_tightness_only():
    _, gi_tgt = synthetic_pair(seed=3)
    a = target_planes(gi_tgt, 1.0)
    b = target_planes(gi_tgt, 20.0)
    assert np.allclose(b[:3], 20.0 * a[:3], atol=1e-6)
    assert np.array_equal(b[3:], a[3:])


def test_offset_position_gives_same_normalized_planes(tmp_path):
    gi_in, _ = synthetic_pair(seed=4)
    shifted = {n: p.copy() for n, p in gi_in.channels.items()}
    valid = gi_in.plane("valid") > 0.5
    for name in ("position.x", "position.y", "position.z"):
        shifted[name] = (shifted[name] + 2.5) * valid
    moved = ChannelImage(gi_in.width, gi_in.height, gi_in.uv_version, shifted)
    assert np.allclose(input_planes(gi_in), input_planes(moved), atol=1e-5)
