"""Pipeline driver: every stage as a subcommand plus the chained pipeline.

Configuration comes from one optional YAML file whose sections mirror the
stage config dataclasses; command-line flags override file values. Each
command writes its artifacts plus a YAML run report (the only place a
timestamp appears, so artifact bytes stay reproducible).

Exit codes: 0 success, 1 stage failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import SimpleNamespace
from typing import Dict, Optional

import cv2
import numpy as np

from .cameras import _make_camera
from .geomimage import GeometryImage, GIError, inverse_gi, rasterize_gi, read_gi, write_gi
from .mesh import MeshError, TriMesh, subdivide_mesh, vertex_normals
from .meshio import MeshParseError, ensure_normals, load_mesh, save_mesh
from .metrics import hausdorff_metrics
from .recovery import (GarmentLabels, RecoveryConfig, load_labels_ply,
                       recover_shape, recovery_energy, save_labels_ply,
                       segment_clothing)
from .registration import (RegistrationConfig, RegistrationError, align_full,
                           load_joints, save_alignment, save_joints)
from .silhouette import render_silhouette
from .solver import SolverError
from .spatial import SpatialIndex
from .synthbody import POSE_PRESETS, make_clothed_fixture
from .template import SkinnedTemplate, TemplateError, load_template, save_template
from .tightness import (BaselinePredictConfig, BridgeError, PredictionOutput,
                        TightnessConfig, TightnessField, baseline_predict,
                        bidirectional_tightness, external_predict,
                        naive_tightness, tightness_to_gi)
from .yamlio import load_tree, save_tree


class UsageError(ValueError):
    pass


_STAGE_ERRORS = (RegistrationError, GIError, BridgeError, MeshParseError,
                 TemplateError, SolverError, MeshError, ValueError, OSError)


@dataclass
class GIOptions:
    resolution: int = 224

    def __post_init__(self):
        if not 8 <= self.resolution <= 4096:
            raise ValueError(f"gi resolution out of range: {self.resolution}")


@dataclass
class PredictorOptions:
    kind: str = "baseline"        # baseline | external
    bridge: str = ""              # command template with {input} {output}
    category: str = "default"
    timeout: float = 600.0

    def __post_init__(self):
        if self.kind not in ("baseline", "external"):
            raise ValueError(f"unknown predictor '{self.kind}'")


@dataclass
class SegmentOptions:
    pairwise_weight: float = 1.0
    max_sweeps: int = 50


@dataclass
class PipelineConfig:
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    tightness: TightnessConfig = field(default_factory=TightnessConfig)
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    gi: GIOptions = field(default_factory=GIOptions)
    predictor: PredictorOptions = field(default_factory=PredictorOptions)
    segmentation: SegmentOptions = field(default_factory=SegmentOptions)


def _merge_section(obj, values: dict, section: str):
    names = {f.name for f in dataclasses.fields(obj)}
    unknown = set(values) - names
    if unknown:
        raise UsageError(
            f"unknown key '{sorted(unknown)[0]}' in config section '{section}'")
    return replace(obj, **values)


def load_config(path: Optional[str]) -> PipelineConfig:
    cfg = PipelineConfig()
    if not path:
        return cfg
    if not Path(path).exists():
        raise UsageError(f"config file not found: {path}")
    tree = load_tree(path) or {}
    if not isinstance(tree, dict):
        raise UsageError(f"config root must be a mapping: {path}")
    sections = {f.name: getattr(cfg, f.name)
                for f in dataclasses.fields(cfg)}
    unknown = set(tree) - set(sections)
    if unknown:
        raise UsageError(f"unknown config section '{sorted(unknown)[0]}'")
    try:
        merged = {name: _merge_section(obj, tree.get(name, {}) or {}, name)
                  for name, obj in sections.items()}
    except (TypeError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"bad config value: {exc}") from exc
    return PipelineConfig(**merged)


def _config_from_args(args) -> PipelineConfig:
    cfg = load_config(getattr(args, "config", None))
    if getattr(args, "res", None):
        cfg = replace(cfg, gi=replace(cfg.gi, resolution=args.res))
    pred = cfg.predictor
    if getattr(args, "predictor", None):
        pred = replace(pred, kind=args.predictor)
    if getattr(args, "bridge", None):
        pred = replace(pred, bridge=args.bridge)
    if getattr(args, "category", None):
        pred = replace(pred, category=args.category)
    cfg = replace(cfg, predictor=pred)
    if getattr(args, "pairwise", None) is not None:
        cfg = replace(cfg, segmentation=replace(
            cfg.segmentation, pairwise_weight=args.pairwise))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, registration=replace(
            cfg.registration, seed=args.seed))
    return cfg


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _report(path, tree: dict) -> None:
    tree = dict(tree)
    tree["generated_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    save_tree(path, tree)


def _load_template_checked(path) -> SkinnedTemplate:
    return load_template(_require(path, "template"))


def _load_on_template(path, tpl: SkinnedTemplate, what: str) -> TriMesh:
    mesh = load_mesh(_require(path, what))
    if mesh.n_vertices != tpl.n_vertices:
        raise UsageError(
            f"{what} has {mesh.n_vertices} vertices, template has "
            f"{tpl.n_vertices}")
    return mesh


def _render_preview(mesh: TriMesh, path, resolution: int = 384) -> None:
    lo, hi = mesh.bbox
    center = (lo + hi) / 2.0
    diag = mesh.bbox_diagonal
    views = []
    for axis in ((0.0, 0.0, 1.0), (1.0, 0.0, 0.0)):
        eye = center - 1.6 * diag * np.asarray(axis)
        cam = _make_camera(eye, axis, (lo, hi), resolution, 0.85, 1.0,
                           "preview")
        mask, _ = render_silhouette(mesh, cam)
        views.append((mask * 255).astype(np.uint8))
    cv2.imwrite(str(path), np.concatenate(views, axis=1))


def _field_from_prediction(gi: GeometryImage, tpl: SkinnedTemplate
                           ) -> TightnessField:
    attrs = inverse_gi(gi, tpl)
    if "tightness" not in attrs:
        raise UsageError("prediction image carries no tightness channels")
    return TightnessField(attrs["tightness"])


# ----------------------------------------------------------- subcommands

def cmd_synth(args) -> int:
    if args.offset < 0 or args.lower_offset is not None and args.lower_offset < 0:
        raise UsageError("garment offsets must be >= 0")
    if args.noise < 0:
        raise UsageError("noise must be >= 0")
    if not 0 <= args.subdiv <= 3:
        raise UsageError("subdiv must be in [0, 3]")
    lower = args.offset if args.lower_offset is None else args.lower_offset
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    fixture = make_clothed_fixture(
        upper_offset=args.offset, lower_offset=lower, pose=args.pose,
        noise=args.noise, translation=tuple(args.translate), seed=args.seed)
    save_template(out / "template", fixture.template)
    save_labels_ply(out / "gt_labels.ply", fixture.scan,
                    GarmentLabels(fixture.labels))
    save_mesh(out / "body_template.ply", fixture.body)
    scan, body = fixture.scan, fixture.body
    for _ in range(args.subdiv):
        scan = subdivide_mesh(scan)
        body = subdivide_mesh(body)
    save_mesh(out / "scan.ply", scan)
    save_mesh(out / "body.ply", body)
    save_joints(out / "joints.txt", fixture.joints)

    manifest = {
        "files": {
            "template": "template",
            "scan": "scan.ply",
            "body": "body.ply",
            "body_template": "body_template.ply",
            "joints": "joints.txt",
            "gt_labels": "gt_labels.ply",
        },
        "params": {
            "offset": args.offset, "lower_offset": lower, "pose": args.pose,
            "noise": args.noise, "subdiv": args.subdiv, "seed": args.seed,
        },
        "counts": {
            "template_vertices": fixture.template.n_vertices,
            "scan_vertices": scan.n_vertices,
        },
        "seconds": time.perf_counter() - t0,
    }
    _report(out / "manifest.yaml", manifest)
    print(f"synth: wrote fixture under {out} "
          f"({fixture.template.n_vertices} template vertices, "
          f"{scan.n_vertices} scan vertices)")
    return 0


def cmd_align(args) -> int:
    cfg = _config_from_args(args)
    tpl = _load_template_checked(args.template)
    scan = ensure_normals(load_mesh(_require(args.scan, "scan")))
    joints = load_joints(_require(args.joints, "joints"))
    out = Path(args.out)

    t0 = time.perf_counter()
    result = align_full(tpl, scan, joints, cfg.registration)
    seconds = time.perf_counter() - t0
    save_alignment(result, out)
    _render_preview(result.m_v, out / "preview.png")
    for name, rep in result.reports.items():
        print(f"align: {name} mean={rep.mean:.6f} ({rep.error_mm:.2f} mm)")
    print(f"align: done in {seconds:.1f}s -> {out}")
    return 0


def cmd_gi(args) -> int:
    cfg = _config_from_args(args)
    tpl = _load_template_checked(args.template)
    mesh = _load_on_template(args.mesh, tpl, "mesh")
    colors = mesh.colors_or_gray()
    if args.scan:
        scan = load_mesh(_require(args.scan, "scan"))
        _, idx = SpatialIndex(scan.vertices).nearest(mesh.vertices)
        colors = scan.colors_or_gray()[idx[:, 0]]
    attrs = {"position": mesh.vertices,
             "normal": vertex_normals(mesh),
             "color": colors}
    gi = rasterize_gi(tpl, attrs, res=cfg.gi.resolution)
    write_gi(gi, args.out)
    print(f"gi: wrote {gi.width}x{gi.height} image with "
          f"{len(gi.channels)} channels -> {args.out}")
    return 0


def cmd_tightness_gt(args) -> int:
    cfg = _config_from_args(args)
    tpl = _load_template_checked(args.template)
    m_v = _load_on_template(args.aligned, tpl, "aligned mesh")
    body = load_mesh(_require(args.body, "body"))
    if args.body_template:
        body_tpl = _load_on_template(args.body_template, tpl, "body template")
    elif body.n_vertices == tpl.n_vertices:
        body_tpl = body
    else:
        body_tpl = None
    mode = getattr(args, "estimator", None) or "auto"
    if mode == "auto":
        # with a corresponded body layer the plain vertex difference IS the
        # ground truth; the one-to-many estimate is the correspondence-free
        # fallback and inherits the alignment error of both layers
        mode = "difference" if body_tpl is not None else "bidirectional"
    if body_tpl is None:
        raise UsageError(
            "body is not on template topology; pass --body-template")

    t0 = time.perf_counter()
    if mode == "difference":
        field = naive_tightness(m_v.vertices, body_tpl.vertices)
    else:
        clothed = load_mesh(_require(args.scan, "scan")) if args.scan else m_v
        field = bidirectional_tightness(m_v, body_tpl, body, clothed,
                                        cfg.tightness)
    labels = (load_labels_ply(_require(args.labels, "labels")).labels
              if args.labels else np.zeros(tpl.n_vertices, dtype=np.int64))
    gi = tightness_to_gi(tpl, field, labels, res=cfg.gi.resolution)
    write_gi(gi, args.out)
    if args.report:
        _report(args.report, {
            "estimator": mode,
            "mean_magnitude": float(field.magnitudes().mean()),
            "max_magnitude": float(field.magnitudes().max()),
            "fallback_vertices": int(field.fallback.sum()),
            "seconds": time.perf_counter() - t0,
        })
    print(f"tightness-gt[{mode}]: mean |T| = "
          f"{field.magnitudes().mean() * 1000:.2f} mm -> {args.out}")
    return 0


def cmd_predict(args) -> int:
    cfg = _config_from_args(args)
    gi = read_gi(_require(args.gi, "input image"))
    t0 = time.perf_counter()
    report: Dict[str, object] = {"predictor": cfg.predictor.kind}
    try:
        if cfg.predictor.kind == "external":
            if not cfg.predictor.bridge:
                raise UsageError("external predictor needs --bridge")
            pred = external_predict(gi, cfg.predictor.bridge,
                                    timeout=cfg.predictor.timeout)
        else:
            pred = baseline_predict(
                gi, BaselinePredictConfig(category=cfg.predictor.category))
    except BridgeError as exc:
        report["error"] = str(exc)
        report["seconds"] = time.perf_counter() - t0
        if args.report:
            _report(args.report, report)
        print(f"error: predict: {exc}", file=sys.stderr)
        return 1
    write_gi(pred.gi, args.out)
    report["provenance"] = pred.provenance
    report["seconds"] = time.perf_counter() - t0
    if args.report:
        _report(args.report, report)
    print(f"predict: {pred.provenance} -> {args.out}")
    return 0


def cmd_recover(args) -> int:
    cfg = _config_from_args(args)
    tpl = _load_template_checked(args.template)
    m_v = _load_on_template(args.aligned, tpl, "aligned mesh")
    m_warp = (_load_on_template(args.warp, tpl, "warp prior").vertices
              if args.warp else m_v.vertices)
    gi = read_gi(_require(args.pred, "prediction image"))
    field = _field_from_prediction(gi, tpl)

    t0 = time.perf_counter()
    recovered = recover_shape(m_v.vertices, field, m_warp, tpl.mesh,
                              cfg.recovery)
    seconds = time.perf_counter() - t0
    save_mesh(args.out, m_v.with_vertices(recovered))
    if args.report:
        e_direct = recovery_energy(m_v.vertices + field.vectors, m_v.vertices,
                                   field, m_warp, tpl.mesh, cfg.recovery)
        e_solved = recovery_energy(recovered, m_v.vertices, field, m_warp,
                                   tpl.mesh, cfg.recovery)
        _report(args.report, {
            "lambdas": {"fit": cfg.recovery.lambda_fit,
                        "smooth": cfg.recovery.lambda_smooth,
                        "reg": cfg.recovery.lambda_reg},
            "energy_direct": e_direct,
            "energy_recovered": e_solved,
            "mean_displacement_mm":
                float(field.magnitudes().mean() * 1000.0),
            "seconds": seconds,
        })
    print(f"recover: wrote {args.out}")
    return 0


def cmd_segment(args) -> int:
    cfg = _config_from_args(args)
    tpl = _load_template_checked(args.template)
    mesh = _load_on_template(args.mesh, tpl, "mesh")
    gi = read_gi(_require(args.pred, "prediction image"))
    labels = segment_clothing(PredictionOutput(gi, "file"), tpl,
                              pairwise_weight=cfg.segmentation.pairwise_weight,
                              max_sweeps=cfg.segmentation.max_sweeps)
    save_labels_ply(args.out, mesh, labels)
    if args.report:
        _report(args.report, {
            "counts": {"body": labels.count(0), "upper": labels.count(1),
                       "lower": labels.count(2)},
            "sweeps": labels.sweeps,
            "energies": [float(e) for e in labels.energies],
        })
    print(f"segment: body={labels.count(0)} upper={labels.count(1)} "
          f"lower={labels.count(2)} -> {args.out}")
    return 0


def cmd_metrics(args) -> int:
    mesh = load_mesh(_require(args.mesh, "mesh"))
    ref = load_mesh(_require(args.ref, "reference"))
    normalizer = args.normalizer if args.normalizer else ref.bbox_diagonal
    rep = hausdorff_metrics(mesh, ref, normalizer=normalizer,
                            samples=args.samples)
    _report(args.report, rep.as_dict())
    print(f"metrics: mean={rep.mean:.6f} rms={rep.rms:.6f} "
          f"max={rep.max:.6f} ({rep.error_mm:.2f} mm)")
    return 0


def _ns(**kw) -> SimpleNamespace:
    base = dict(config=None, res=None, predictor=None, bridge=None,
                category=None, pairwise=None, seed=None, report=None,
                scan=None, warp=None, labels=None, body_template=None,
                normalizer=None, samples=None)
    base.update(kw)
    return SimpleNamespace(**base)


def cmd_pipeline(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    stages: Dict[str, object] = {}

    def run(name: str, fn, ns) -> int:
        ts = time.perf_counter()
        rc = fn(ns)
        stages[name] = {"exit": rc, "seconds": time.perf_counter() - ts}
        return rc

    common = dict(config=args.config, res=args.res, seed=args.seed)
    rc = run("align", cmd_align, _ns(
        template=args.template, scan=args.scan, joints=args.joints,
        out=out / "align", **common))
    if rc:
        return rc
    aligned = out / "align" / "m_v.ply"
    warp = out / "align" / "m_warp.ply"

    rc = run("gi", cmd_gi, _ns(
        template=args.template, mesh=aligned, scan=args.scan,
        out=out / "clothed.cgi", **common))
    if rc:
        return rc

    if args.tightness == "gt":
        if not args.gt_body:
            raise UsageError("--tightness gt requires --gt-body")
        rc = run("tightness-gt", cmd_tightness_gt, _ns(
            template=args.template, aligned=aligned, body=args.gt_body,
            body_template=args.gt_body_template, scan=args.scan,
            estimator=getattr(args, "estimator", "auto"),
            labels=args.gt_labels, out=out / "prediction.cgi",
            report=out / "tightness_report.yaml", **common))
    else:
        rc = run("predict", cmd_predict, _ns(
            gi=out / "clothed.cgi", out=out / "prediction.cgi",
            predictor=args.predictor, bridge=args.bridge,
            category=args.category, report=out / "predict_report.yaml",
            **common))
    if rc:
        return rc

    rc = run("recover", cmd_recover, _ns(
        template=args.template, aligned=aligned, warp=warp,
        pred=out / "prediction.cgi", out=out / "body_recovered.ply",
        report=out / "recover_report.yaml", **common))
    if rc:
        return rc
    _render_preview(load_mesh(out / "body_recovered.ply"),
                    out / "body_preview.png")

    if args.tightness != "gt" or args.gt_labels:
        rc = run("segment", cmd_segment, _ns(
            template=args.template, mesh=aligned,
            pred=out / "prediction.cgi", out=out / "labels.ply",
            report=out / "segment_report.yaml", pairwise=args.pairwise,
            **common))
        if rc:
            return rc

    if args.gt_body:
        rc = run("metrics", cmd_metrics, _ns(
            mesh=out / "body_recovered.ply", ref=args.gt_body,
            report=out / "metrics.yaml", **common))
        if rc:
            return rc

    _report(out / "pipeline_report.yaml", {
        "stages": stages,
        "tightness_path": args.tightness,
        "total_seconds": time.perf_counter() - t0,
    })
    print(f"pipeline: completed in {time.perf_counter() - t0:.1f}s -> {out}")
    return 0


# ------------------------------------------------------------ arg parsing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tightcap",
        description="Body-under-clothing reconstruction pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--res", type=int, help="geometry image resolution")
        sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("synth", help="generate a synthetic clothed fixture")
    sp.add_argument("--out", required=True)
    sp.add_argument("--offset", type=float, default=0.03,
                    help="upper garment offset in meters")
    sp.add_argument("--lower-offset", type=float, default=None,
                    help="lower garment offset (default: same as --offset)")
    sp.add_argument("--pose", choices=POSE_PRESETS, default="rest")
    sp.add_argument("--noise", type=float, default=0.0)
    sp.add_argument("--subdiv", type=int, default=1,
                    help="scan/body subdivision rounds")
    sp.add_argument("--translate", type=float, nargs=3, default=[0.0, 0.0, 0.0])
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_synth)

    sp = sub.add_parser("align", help="register the template to a scan")
    sp.add_argument("--template", required=True)
    sp.add_argument("--scan", required=True)
    sp.add_argument("--joints", required=True)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(fn=cmd_align)

    sp = sub.add_parser("gi", help="rasterize an aligned mesh into a CGI1 file")
    sp.add_argument("--template", required=True)
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--scan", help="sample per-vertex colors from this mesh")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(fn=cmd_gi)

    sp = sub.add_parser("tightness-gt",
                        help="ground-truth tightness from an aligned pair")
    sp.add_argument("--template", required=True)
    sp.add_argument("--aligned", required=True)
    sp.add_argument("--body", required=True)
    sp.add_argument("--body-template", dest="body_template")
    sp.add_argument("--estimator",
                    choices=("auto", "difference", "bidirectional"),
                    default="auto",
                    help="difference = per-vertex layer subtraction (needs a "
                         "corresponded body template); bidirectional = "
                         "one-to-many gather both ways")
    sp.add_argument("--scan")
    sp.add_argument("--labels", help="garment-label PLY for mask planes")
    sp.add_argument("--out", required=True)
    sp.add_argument("--report")
    common(sp)
    sp.set_defaults(fn=cmd_tightness_gt)

    sp = sub.add_parser("predict", help="predict tightness + masks from a GI")
    sp.add_argument("--gi", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--predictor", choices=("baseline", "external"))
    sp.add_argument("--bridge", help="external command with {input} {output}")
    sp.add_argument("--category", choices=("default", "no-lower"))
    sp.add_argument("--report")
    common(sp)
    sp.set_defaults(fn=cmd_predict)

    sp = sub.add_parser("recover", help="solve the inner body shape")
    sp.add_argument("--template", required=True)
    sp.add_argument("--aligned", required=True)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--warp", help="early-warp prior mesh")
    sp.add_argument("--out", required=True)
    sp.add_argument("--report")
    common(sp)
    sp.set_defaults(fn=cmd_recover)

    sp = sub.add_parser("segment", help="label body/upper/lower per vertex")
    sp.add_argument("--template", required=True)
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--pairwise", type=float, default=None)
    sp.add_argument("--report")
    common(sp)
    sp.set_defaults(fn=cmd_segment)

    sp = sub.add_parser("metrics", help="surface-distance report")
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--normalizer", type=float, default=None)
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--report", required=True)
    sp.set_defaults(fn=cmd_metrics)

    sp = sub.add_parser("pipeline", help="run all stages")
    sp.add_argument("--template", required=True)
    sp.add_argument("--scan", required=True)
    sp.add_argument("--joints", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--tightness", choices=("predicted", "gt"),
                    default="predicted")
    sp.add_argument("--gt-body", dest="gt_body")
    sp.add_argument("--gt-body-template", dest="gt_body_template")
    sp.add_argument("--gt-labels", dest="gt_labels")
    sp.add_argument("--estimator",
                    choices=("auto", "difference", "bidirectional"),
                    default="auto", help="ground-truth tightness formulation")
    sp.add_argument("--predictor", choices=("baseline", "external"))
    sp.add_argument("--bridge")
    sp.add_argument("--category", choices=("default", "no-lower"))
    sp.add_argument("--pairwise", type=float, default=None)
    common(sp)
    sp.set_defaults(fn=cmd_pipeline)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except _STAGE_ERRORS as exc:
        stage = getattr(exc, "stage", args.command)
        print(f"error: {stage}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
