"""Checkpoint inference over single geometry images.

Deterministic by construction: evaluation mode disables dropout, instance
normalization uses per-sample statistics, and nothing is sampled — two runs
on the same input and checkpoint produce byte-identical output files.
"""

from pathlib import Path
from typing import Dict, Tuple

import numpy as np
import torch

from .cgi import ChannelImage, read_cgi, write_cgi
from .data import input_planes
from .model import UNetGenerator


class InferenceError(Exception):
    """Checkpoint/input disagreement or unusable checkpoint."""


def load_checkpoint(ckpt_path, device: str = "cpu"
                    ) -> Tuple[UNetGenerator, Dict]:
    try:
        ckpt = torch.load(Path(ckpt_path), map_location=device,
                          weights_only=True)
    except Exception as exc:
        raise InferenceError(f"cannot load checkpoint {ckpt_path}: {exc}")
    for key in ("generator", "model", "tightness_scale", "uv_version"):
        if key not in ckpt:
            raise InferenceError(f"checkpoint {ckpt_path} lacks '{key}'")
    gen = UNetGenerator(**ckpt["model"]).to(device)
    gen.load_state_dict(ckpt["generator"])
    gen.eval()
    return gen, ckpt


def predict_image(gen: UNetGenerator, ckpt: Dict, img: ChannelImage,
                  device: str = "cpu") -> ChannelImage:
    if img.uv_version != int(ckpt["uv_version"]):
        raise InferenceError(
            f"input uv version {img.uv_version:#010x} does not match the "
            f"checkpoint's {int(ckpt['uv_version']):#010x}")
    x = torch.from_numpy(input_planes(img))[None].to(device)
    with torch.no_grad():
        y = gen(x)[0].cpu().numpy()
    keep = (img.plane("valid") > 0.5).astype(np.float32)
    tight = y[:3] / float(ckpt["tightness_scale"]) * keep
    masks = y[3:5] * keep
    return ChannelImage(
        width=img.width, height=img.height, uv_version=img.uv_version,
        channels={
            "tightness.x": tight[0], "tightness.y": tight[1],
            "tightness.z": tight[2],
            "mask.upper": masks[0], "mask.lower": masks[1],
            "valid": img.plane("valid"),
        })


def infer(input_path, ckpt_path, output_path, device: str = "cpu") -> Dict:
    """Read a clothed GI, run the generator, write the prediction GI."""
    img = read_cgi(input_path)
    gen, ckpt = load_checkpoint(ckpt_path, device=device)
    out = predict_image(gen, ckpt, img, device=device)
    write_cgi(out, output_path)
    return {
        "input": str(input_path),
        "output": str(output_path),
        "resolution": [img.width, img.height],
        "uv_version": int(img.uv_version),
        "channels": sorted(out.channels),
    }
