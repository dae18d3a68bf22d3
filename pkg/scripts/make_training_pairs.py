#!/usr/bin/env python3
"""Bake paired geometry images for the learned tightness predictor.

Each pair comes from one synthetic clothed fixture: the input image carries
the clothed surface (position/normal/color), the target carries the exact
per-vertex tightness (the clothed and body layers share topology, so the
plain vertex difference is ground truth) plus the garment masks.  A
configurable fraction of fixtures has no lower garment, so the predictor
sees both clothing categories.

Output: <out>/pair_NNNN_{input,target}.cgi plus a manifest of draw
parameters.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from tightcap.geomimage import rasterize_gi, write_gi
from tightcap.synthbody import POSE_PRESETS, make_clothed_fixture
from tightcap.tightness import naive_tightness


def build_pair(fx, res):
    tpl = fx.template
    gi_in = rasterize_gi(tpl, {
        "position": fx.scan.vertices,
        "normal": fx.scan.normals,
        "color": fx.scan.colors,
    }, res=res)
    field = naive_tightness(fx.scan.vertices, fx.body.vertices)
    gi_tgt = rasterize_gi(tpl, {
        "tightness": field.vectors,
        "mask.upper": (fx.labels == 1).astype(np.float64),
        "mask.lower": (fx.labels == 2).astype(np.float64),
    }, res=res)
    return gi_in, gi_tgt


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--count", type=int, default=50)
    ap.add_argument("--resolution", type=int, default=224)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--skirt-fraction", type=float, default=0.25,
                    help="fraction of fixtures without a lower garment")
    ap.add_argument("--noise", type=float, default=0.002,
                    help="offset jitter passed to the fixture builder")
    args = ap.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    records = []
    t0 = time.perf_counter()
    for i in range(args.count):
        pose = str(rng.choice(POSE_PRESETS))
        upper = float(rng.uniform(0.015, 0.05))
        lower = 0.0 if rng.random() < args.skirt_fraction \
            else float(rng.uniform(0.015, 0.05))
        fx = make_clothed_fixture(upper_offset=upper, lower_offset=lower,
                                  pose=pose, noise=args.noise, seed=i)
        gi_in, gi_tgt = build_pair(fx, args.resolution)
        stem = f"pair_{i:04d}"
        write_gi(gi_in, out / f"{stem}_input.cgi")
        write_gi(gi_tgt, out / f"{stem}_target.cgi")
        records.append({"stem": stem, "pose": pose,
                        "upper_offset": round(upper, 6),
                        "lower_offset": round(lower, 6),
                        "seed": i})
        print(f"{stem}: pose={pose} upper={upper:.3f} lower={lower:.3f}")
    manifest = {
        "count": args.count,
        "resolution": args.resolution,
        "seed": args.seed,
        "skirt_fraction": args.skirt_fraction,
        "noise": args.noise,
        "pairs": records,
        "seconds": round(time.perf_counter() - t0, 2),
    }
    (out / "manifest.yaml").write_text(yaml.safe_dump(manifest,
                                                      sort_keys=False))
    print(f"wrote {args.count} pairs to {out} "
          f"in {manifest['seconds']:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
