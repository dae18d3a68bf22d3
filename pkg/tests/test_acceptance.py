"""End-to-end acceptance suite: one test per shipped guarantee.

Run with -v to get a pass/fail line per guarantee. These tests are
deliberately heavier than the unit suites (minutes, not seconds): they
exercise default configurations on full-size fixtures, and the two
pipeline tests shell out to the installed CLI exactly as a user would.
"""

import importlib.util
import itertools
import subprocess
import sys
import time
import zlib
from pathlib import Path

import numpy as np
import pytest
import yaml

import tightcap

from tightcap.cameras import build_camera_rig
from tightcap.deform import EDState, build_ed_graph
from tightcap.geomimage import inverse_gi, rasterize_gi, read_gi, write_gi
from tightcap.mesh import TriMesh
from tightcap.metrics import hausdorff_metrics
from tightcap.recovery import (RecoveryConfig, icm_minimize, recover_direct,
                               recover_shape, segmentation_energy)
from tightcap.registration import (align_full, make_arap_block,
                                   make_fit_block, make_laplacian_block,
                                   make_plane_block, make_point_block,
                                   make_pose_reg_block, make_silhouette_block)
from tightcap.solver import check_gradient
from tightcap.synthbody import make_clothed_fixture
from tightcap.tightness import (TightnessConfig, bidirectional_tightness,
                                external_predict, one_to_many_tightness)

from conftest import brute_tightness, icosphere, random_hull_mesh


# --------------------------------------------------- staged alignment

ALIGN_CASES = [(0.01, "rest"), (0.02, "bend"), (0.03, "lean"),
               (0.04, "twist"), (0.05, "bend")]


@pytest.mark.parametrize("offset,pose", ALIGN_CASES,
                         ids=[f"{int(o * 100)}cm-{p}" for o, p in ALIGN_CASES])
def test_alignment_error_decreases_per_stage_to_under_half_percent(
        offset, pose):
    seed = int(offset * 100)
    fx = make_clothed_fixture(upper_offset=offset, lower_offset=offset,
                              pose=pose, seed=seed)
    # joint targets carry detector-grade noise so the refinement stages
    # start from a realistic skeletal warp
    rng = np.random.default_rng(seed)
    joints = {n: p + rng.normal(0.0, 0.015, 3) for n, p in fx.joints.items()}

    t0 = time.perf_counter()
    res = align_full(fx.template, fx.scan, joints)
    elapsed = time.perf_counter() - t0

    # the monotone contract covers the three refinement stages; the
    # silhouette stage optimizes 2D outlines and is not guaranteed to
    # reduce 3D surface distance relative to the joint-fitted warp
    chain = [res.reports[n].mean for n in ("m_s", "m_d", "m_v")]
    assert all(b < a for a, b in zip(chain, chain[1:])), chain
    assert chain[-1] < 0.005, chain
    assert elapsed < 300.0


# ------------------------------------------- one-to-many gather oracle

def test_one_to_many_estimator_matches_brute_force_bitwise():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    for trial in range(20):
        body = random_hull_mesh(rng, int(rng.integers(40, 700)),
                                scale=float(rng.uniform(0.2, 0.5)))
        query = random_hull_mesh(rng, int(rng.integers(40, 700)),
                                 scale=float(rng.uniform(0.2, 0.5)))
        assert body.n_vertices <= 2000 and query.n_vertices <= 2000
        cfg = TightnessConfig(
            cone_aperture_deg=float(rng.uniform(10.0, 60.0)),
            knn_k=int(rng.integers(1, 40)),
            kernel_sigma_deg=float(rng.uniform(5.0, 40.0)),
            normalization="count" if trial % 2 else "weight-sum")
        got = one_to_many_tightness(query.vertices, query.normals, body, cfg)
        want_v, want_f = brute_tightness(query.vertices, query.normals,
                                         body.vertices, body.normals, cfg)
        assert np.array_equal(got.vectors, want_v)
        assert np.array_equal(got.fallback, want_f)
    assert time.perf_counter() - t0 < 60.0


# ------------------------------------------ sphere-gap ground truth

@pytest.mark.parametrize("delta", [0.01, 0.03, 0.05],
                         ids=["1cm", "3cm", "5cm"])
def test_sphere_recovery_lands_within_five_percent_of_gap(delta):
    outer = icosphere(5, 0.15)
    inner = icosphere(5, 0.15 - delta)
    field = bidirectional_tightness(outer, inner, inner, outer)
    recovered = recover_shape(outer.vertices, field, outer.vertices, outer)
    rep = hausdorff_metrics(TriMesh(recovered, outer.faces), inner,
                            normalizer=1.0)
    assert rep.mean <= 0.05 * delta, (delta, rep.mean)


def test_recovery_without_priors_equals_direct_application():
    outer = icosphere(4, 0.15)
    inner = icosphere(4, 0.12)
    field = bidirectional_tightness(outer, inner, inner, outer)
    cfg = RecoveryConfig(lambda_fit=1.0, lambda_smooth=0.0, lambda_reg=0.0)
    solved = recover_shape(outer.vertices, field, outer.vertices, outer, cfg)
    direct = recover_direct(outer.vertices, field)
    assert np.abs(solved - direct).max() < 1e-10


# ----------------------------------------------------- full pipeline

@pytest.fixture(scope="module")
def default_fixture(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixture")
    r = subprocess.run([sys.executable, "-m", "tightcap.cli", "synth",
                        "--out", str(out)],
                       capture_output=True, text=True, timeout=600)
    assert r.returncode == 0, r.stderr
    manifest = yaml.safe_load((out / "manifest.yaml").read_text())
    return out, float(manifest["params"]["offset"])


def _run_pipeline(fixture_dir, out_dir, extra):
    cmd = [sys.executable, "-m", "tightcap.cli", "pipeline",
           "--template", str(fixture_dir / "template"),
           "--scan", str(fixture_dir / "scan.ply"),
           "--joints", str(fixture_dir / "joints.txt"),
           "--gt-body", str(fixture_dir / "body.ply"),
           "--out", str(out_dir)] + extra
    t0 = time.perf_counter()
    r = subprocess.run(cmd, capture_output=True, text=True, timeout=660)
    elapsed = time.perf_counter() - t0
    assert r.returncode == 0, r.stdout + r.stderr
    assert elapsed < 600.0
    rep = yaml.safe_load((out_dir / "metrics.yaml").read_text())
    return rep["mean"] * rep["normalizer"]


def test_pipeline_with_baseline_predictor_within_forty_percent_of_offset(
        default_fixture, tmp_path):
    fixture_dir, offset = default_fixture
    err = _run_pipeline(fixture_dir, tmp_path / "run", [])
    assert err <= 0.40 * offset, (err, offset)


def test_pipeline_with_ground_truth_tightness_within_five_percent_of_offset(
        default_fixture, tmp_path):
    fixture_dir, offset = default_fixture
    err = _run_pipeline(fixture_dir, tmp_path / "run", [
        "--tightness", "gt",
        "--gt-body-template", str(fixture_dir / "body_template.ply"),
        "--gt-labels", str(fixture_dir / "gt_labels.ply")])
    assert err <= 0.05 * offset, (err, offset)


# ------------------------------------------------- jacobian integrity

class _Holder:
    def __init__(self, n_nodes):
        self.state = EDState.identity(n_nodes)


@pytest.fixture(scope="module")
def block_zoo():
    """One instance of every residual block plus a state sampler for it."""
    fx = make_clothed_fixture(pose="bend", seed=3)
    rig = fx.template.rig
    nj = rig.n_joints
    rng = np.random.default_rng(17)

    sph = icosphere(2, 0.4)
    graph = build_ed_graph(sph.vertices, 25, seed=1)
    holder = _Holder(len(graph.nodes))
    nd = 6 * len(graph.nodes)
    ids = rng.choice(sph.n_vertices, 60, replace=False)
    src = sph.vertices[ids]
    bind = (graph.bind_idx[ids], graph.bind_w[ids])
    targets = src + rng.normal(0.0, 0.02, src.shape)
    tn = rng.normal(size=src.shape)
    tn /= np.linalg.norm(tn, axis=1, keepdims=True)

    rig_cams = build_camera_rig(np.stack(fx.scan.bbox), fx.joints,
                                resolution=256, fill=0.8)
    cams = rig_cams.cameras
    vids = rng.choice(sph.n_vertices, 50, replace=False)
    cam_ids = rng.integers(0, len(cams), 50)
    pix = np.stack([cams[c].project(sph.vertices[v][None])[0][0]
                    for v, c in zip(vids, cam_ids)])
    n2 = rng.normal(size=(50, 2))
    n2 /= np.linalg.norm(n2, axis=1, keepdims=True)
    corr = {"vids": vids, "cam_ids": cam_ids,
            "points": pix + rng.normal(0.0, 2.0, (50, 2)), "normals": n2,
            "sqrt_weights": rng.uniform(0.5, 1.5, 50)}

    flat = icosphere(1, 0.3)

    def ed_state(r):
        # randomize the deformation state through the holder and probe at
        # the increment origin — the chart the solver differentiates in
        # after every retraction; away from it, finite differences on
        # weakly-coupled entries sit below the relative-error floor
        holder.state = EDState.identity(len(graph.nodes)).apply_delta(
            r.normal(0.0, 0.05, nd))
        return np.zeros(nd)

    return {
        "fit": (make_fit_block(rig, fx.joints),
                lambda r: r.normal(0.0, 0.15, 3 * nj + 3)),
        "pose-reg": (make_pose_reg_block(nj),
                     lambda r: r.normal(0.0, 0.5, 3 * nj + 3)),
        "arap": (make_arap_block(graph, holder, 7.0), ed_state),
        "point": (make_point_block(graph, holder, src, bind, targets, 1.0),
                  ed_state),
        "plane": (make_plane_block(graph, holder, src, bind, targets, tn,
                                   1.0), ed_state),
        "silhouette": (make_silhouette_block(graph, holder, cams, corr),
                       ed_state),
        "smoothness": (make_laplacian_block(flat, 1.0),
                       lambda r: (flat.vertices
                                  + r.normal(0.0, 0.01, flat.vertices.shape)
                                  ).ravel()),
    }


@pytest.mark.parametrize("name", ["silhouette", "point", "plane", "arap",
                                  "smoothness", "fit", "pose-reg"])
def test_every_residual_block_passes_gradient_checks(block_zoo, name):
    block, sample = block_zoo[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for trial in range(10):
        chk = check_gradient(block, sample(rng))
        assert chk.ok, (name, trial, chk.max_error)


# ---------------------------------------------- geometry-image fidelity

def _smooth_fields(uv):
    """Low-frequency UV signals with a DC offset, resolvable at 64 px."""
    u, v = uv[:, 0], uv[:, 1]
    return {
        "position": np.stack([1.0 + 0.2 * np.sin(2 * np.pi * u)
                              * np.sin(2 * np.pi * v),
                              1.0 + 0.2 * np.cos(2 * np.pi * u),
                              1.0 + 0.1 * (u + v)], axis=1),
        "color": np.stack([0.5 + 0.25 * np.cos(np.pi * u),
                           0.5 + 0.25 * np.sin(np.pi * v),
                           0.5 + 0.2 * u * v], axis=1),
    }


def _rel_err(a, b):
    return np.abs(a - b).max() / np.abs(b).max()


def test_geometry_image_round_trip_under_1e3_and_monotone(default_template):
    fields = _smooth_fields(default_template.uv)
    gi = rasterize_gi(default_template, fields, res=224)
    back = inverse_gi(gi, default_template)
    for key in fields:
        assert _rel_err(back[key], fields[key]) < 1e-3, key
    # monotonicity is asserted on the geometry payload; a uv-analytic
    # color signal is discontinuous on the surface across the chart
    # closure, so its error plateaus at the seam level instead
    errs = []
    for res in (64, 128, 224, 448):
        gi = rasterize_gi(default_template, fields, res=res)
        back = inverse_gi(gi, default_template)
        errs.append(_rel_err(back["position"], fields["position"]))
    assert all(b < a for a, b in zip(errs, errs[1:])), errs


def test_geometry_image_container_is_bitwise_lossless(default_template,
                                                      tmp_path):
    rng = np.random.default_rng(3)
    attrs = {"position": default_template.mesh.vertices,
             "tightness": rng.standard_normal(
                 (default_template.mesh.n_vertices, 3))}
    gi = rasterize_gi(default_template, attrs, res=224)
    write_gi(gi, tmp_path / "rt.cgi")
    back = read_gi(tmp_path / "rt.cgi")
    assert back.width == gi.width and back.height == gi.height
    assert back.uv_version == gi.uv_version
    assert set(back.channels) == set(gi.channels)
    for key, plane in gi.channels.items():
        assert np.array_equal(back.channels[key], plane), key


# ------------------------------------------------- label optimization

def test_icm_reaches_enumeration_minimum_on_random_instances():
    rng = np.random.default_rng(23)
    n, labels, w = 10, 2, 0.1
    edges = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
    hits = 0
    for _ in range(100):
        unary = rng.normal(size=(n, labels))
        got, energies = icm_minimize(unary, edges, pairwise_weight=w)
        assert np.all(np.diff(energies) <= 1e-12)
        best = min(segmentation_energy(unary, edges, np.array(lab), w)
                   for lab in itertools.product(range(labels), repeat=n))
        e = segmentation_energy(unary, edges, got, w)
        assert e >= best - 1e-12
        hits += e <= best + 1e-12
    assert hits >= 95, hits


# ------------------------------------------------- distance metrics

def test_surface_distance_self_is_exactly_zero():
    m = icosphere(3, 0.31)
    rep = hausdorff_metrics(m, m, normalizer=1.0)
    assert rep.mean == 0.0 and rep.max == 0.0


def test_surface_distance_matches_analytic_concentric_spheres():
    a = icosphere(4, 0.20)
    b = icosphere(4, 0.24)
    rep = hausdorff_metrics(a, b, normalizer=1.0)
    assert abs(rep.mean - 0.04) <= 0.004, rep.mean


# ------------------------------------------- learned predictor bridge

# the learned predictor is an optional sibling package; everything above
# this line must pass without it
secondary = pytest.mark.skipif(importlib.util.find_spec("tightnet") is None,
                               reason="learned predictor not installed")


def test_primary_package_is_free_of_learned_predictor_imports():
    root = Path(tightcap.__file__).resolve().parent
    offenders = [p.name for p in sorted(root.rglob("*.py"))
                 if "tightnet" in p.read_text()]
    assert offenders == []


@pytest.fixture(scope="session")
def pair_corpus(tmp_path_factory):
    """50 baked image pairs at 64 px; both clothing categories present."""
    out = tmp_path_factory.mktemp("pairs")
    script = (Path(__file__).resolve().parents[1] / "scripts"
              / "make_training_pairs.py")
    proc = subprocess.run(
        [sys.executable, str(script), "--out", str(out), "--count", "50",
         "--resolution", "64", "--seed", "0"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return out


@pytest.fixture(scope="session")
def trained_predictor(pair_corpus, tmp_path_factory):
    """Checkpoint fitted on the first 40 pairs; the last 10 stay unseen."""
    from tightnet.data import discover_pairs
    from tightnet.train import TrainConfig, train

    out = tmp_path_factory.mktemp("ckpt") / "tightnet.pt"
    pairs = discover_pairs(pair_corpus)
    train(pair_corpus, out,
          TrainConfig(steps=800, batch=4, base=32, seed=0, log_every=0),
          pairs=pairs[:40])
    return out


@secondary
def test_learned_predictor_overfits_a_single_pair(pair_corpus, tmp_path):
    from tightnet.data import discover_pairs
    from tightnet.train import TrainConfig, train

    pairs = discover_pairs(pair_corpus)[:1]
    summary = train(pair_corpus, tmp_path / "overfit.pt",
                    TrainConfig(steps=500, batch=1, seed=0, log_every=0),
                    pairs=pairs)
    curve = np.asarray(summary["l1_curve"])
    assert curve.min() < 0.05 * curve[0], curve.min() / curve[0]


@secondary
def test_learned_predictor_mask_iou_on_held_out_pairs(pair_corpus,
                                                      trained_predictor):
    from tightnet.cgi import read_cgi
    from tightnet.data import discover_pairs
    from tightnet.infer import load_checkpoint, predict_image

    gen, ckpt = load_checkpoint(trained_predictor)
    ious = []
    for in_path, tg_path in discover_pairs(pair_corpus)[40:]:
        img, tgt = read_cgi(in_path), read_cgi(tg_path)
        pred = predict_image(gen, ckpt, img)
        valid = img.plane("valid") > 0.5
        for ch in ("mask.upper", "mask.lower"):
            p = (pred.plane(ch) > 0.5) & valid
            g = (tgt.plane(ch) > 0.5) & valid
            union = (p | g).sum()
            ious.append(1.0 if union == 0 else (p & g).sum() / union)
    assert np.mean(ious) > 0.8, np.mean(ious)


@secondary
def test_learned_predictor_zeroes_the_lower_mask_on_skirt_fixtures(
        pair_corpus, trained_predictor):
    from tightnet.cgi import read_cgi
    from tightnet.infer import load_checkpoint, predict_image

    manifest = yaml.safe_load((pair_corpus / "manifest.yaml").read_text())
    held_out_skirts = [r["stem"] for r in manifest["pairs"]
                       if r["lower_offset"] == 0.0
                       and int(r["stem"].split("_")[1]) >= 40]
    assert held_out_skirts, "corpus draw lost its held-out skirt fixtures"
    gen, ckpt = load_checkpoint(trained_predictor)
    for stem in held_out_skirts:
        img = read_cgi(pair_corpus / f"{stem}_input.cgi")
        pred = predict_image(gen, ckpt, img)
        valid = img.plane("valid") > 0.5
        mean_lower = float(pred.plane("mask.lower")[valid].mean())
        assert mean_lower < 0.05, (stem, mean_lower)


@secondary
def test_learned_predictor_speaks_the_bridge_contract(pair_corpus,
                                                      trained_predictor,
                                                      tmp_path):
    src = pair_corpus / "pair_0042_input.cgi"
    cmd = [sys.executable, "-m", "tightnet.cli", "infer",
           "--in", str(src), "--ckpt", str(trained_predictor)]
    out1, out2 = tmp_path / "a.cgi", tmp_path / "b.cgi"
    for out in (out1, out2):
        proc = subprocess.run(cmd + ["--out", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
    # repeated runs are byte-identical and the primary reader takes the
    # file as-is
    assert out1.read_bytes() == out2.read_bytes()
    pred = read_gi(out1)
    src_gi = read_gi(src)
    assert (pred.width, pred.height) == (src_gi.width, src_gi.height)
    assert pred.uv_version == src_gi.uv_version
    for name in ("tightness.x", "tightness.y", "tightness.z",
                 "mask.upper", "mask.lower", "valid"):
        assert pred.has(name)

    bridge = (f"{sys.executable} -m tightnet.cli infer --in {{input}} "
              f"--ckpt {trained_predictor} --out {{output}}")
    result = external_predict(src_gi, bridge)
    assert result.provenance == "external"
    assert np.array_equal(result.gi.plane("valid"), src_gi.plane("valid"))
