"""Paired geometry-image dataset for tightness regression.

Pairs are flat files in one directory: ``<stem>_input.cgi`` holds the clothed
geometry (position/normal/color/valid), ``<stem>_target.cgi`` the tightness
vectors and garment masks on the same raster.  All files in a dataset must
agree on resolution and uv layout version; anything inconsistent fails before
training starts.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .cgi import ChannelImage, read_cgi

INPUT_CHANNELS = (
    "position.x", "position.y", "position.z",
    "normal.x", "normal.y", "normal.z",
    "color.r", "color.g", "color.b",
    "valid",
)
TARGET_CHANNELS = (
    "tightness.x", "tightness.y", "tightness.z",
    "mask.upper", "mask.lower",
)

# network-facing plane counts: 3 position + 3 normal + 1 luminance, plus the
# coverage mask appended as the conditioning channel
N_INPUT_PLANES = 8
N_TARGET_PLANES = 5

_LUMA = (0.299, 0.587, 0.114)


class DatasetError(Exception):
    """Unusable training-pair directory."""


def discover_pairs(data_dir) -> List[Tuple[Path, Path]]:
    """Matched (input, target) paths, sorted by stem.

    Orphans on either side are errors: a half-written dataset should not
    silently train on its intersection.
    """
    root = Path(data_dir)
    if not root.is_dir():
        raise DatasetError(f"{root} is not a directory")
    inputs = {p.name[:-len("_input.cgi")]: p
              for p in root.glob("*_input.cgi")}
    targets = {p.name[:-len("_target.cgi")]: p
               for p in root.glob("*_target.cgi")}
    missing_t = sorted(set(inputs) - set(targets))
    missing_i = sorted(set(targets) - set(inputs))
    if missing_t:
        raise DatasetError(f"{root}: no target for {missing_t}")
    if missing_i:
        raise DatasetError(f"{root}: no input for {missing_i}")
    return [(inputs[k], targets[k]) for k in sorted(inputs)]


def input_planes(img: ChannelImage) -> np.ndarray:
    """(8, h, w) float32 conditioning stack.

    Positions are centered on the covered pixels and scaled to unit radius
    per image (the raster is in meters and the subject may sit anywhere);
    color collapses to luminance in [-1, 1]; background stays zero.
    """
    for name in INPUT_CHANNELS:
        if not img.has(name):
            raise DatasetError(f"input image lacks channel '{name}'")
    valid = img.plane("valid") > 0.5
    pos = img.vector("position").astype(np.float64)
    if valid.any():
        center = pos[valid].mean(axis=0)
        rad = np.linalg.norm(pos[valid] - center, axis=1).max()
    else:
        center, rad = np.zeros(3), 1.0
    pos = (pos - center) / max(rad, 1e-6)
    nrm = img.vector("normal")
    col = img.vector("color")
    luma = col @ np.asarray(_LUMA)
    planes = np.concatenate([
        pos.transpose(2, 0, 1),
        nrm.transpose(2, 0, 1),
        (2.0 * luma - 1.0)[None],
        valid[None].astype(np.float64),
    ]).astype(np.float32)
    return planes * valid[None]


def target_planes(img: ChannelImage, tightness_scale: float) -> np.ndarray:
    """(5, h, w) float32 regression stack: scaled tightness + binary masks."""
    for name in TARGET_CHANNELS:
        if not img.has(name):
            raise DatasetError(f"target image lacks channel '{name}'")
    t = img.vector("tightness").transpose(2, 0, 1) * tightness_scale
    masks = np.stack([img.plane("mask.upper"), img.plane("mask.lower")])
    return np.concatenate([t, masks]).astype(np.float32)


@dataclass
class PairedDataset:
    inputs: np.ndarray        # (n, 8, h, w)
    targets: np.ndarray      # (n, 5, h, w)
    valid: np.ndarray        # (n, 1, h, w)
    width: int
    height: int
    uv_version: int
    stems: List[str]

    def __len__(self) -> int:
        return self.inputs.shape[0]


def load_dataset(data_dir, tightness_scale: float,
                 pairs: Sequence[Tuple[Path, Path]] = None) -> PairedDataset:
    pairs = list(pairs) if pairs is not None else discover_pairs(data_dir)
    if not pairs:
        raise DatasetError(f"{data_dir}: no *_input.cgi/*_target.cgi pairs")
    shape = None
    uv = None
    ins, tgts, vals, stems = [], [], [], []
    for in_path, tg_path in pairs:
        a = read_cgi(in_path)
        b = read_cgi(tg_path)
        for img, path in ((a, in_path), (b, tg_path)):
            if shape is None:
                shape, uv = (img.width, img.height), img.uv_version
            if (img.width, img.height) != shape:
                raise DatasetError(
                    f"{path}: resolution {img.width}x{img.height} differs "
                    f"from the dataset's {shape[0]}x{shape[1]}")
            if img.uv_version != uv:
                raise DatasetError(
                    f"{path}: uv version {img.uv_version:#010x} differs "
                    f"from the dataset's {uv:#010x}")
        ins.append(input_planes(a))
        tgts.append(target_planes(b, tightness_scale))
        vals.append((a.plane("valid") > 0.5)[None].astype(np.float32))
        stems.append(in_path.name[:-len("_input.cgi")])
    return PairedDataset(inputs=np.stack(ins), targets=np.stack(tgts),
                         valid=np.stack(vals), width=shape[0], height=shape[1],
                         uv_version=uv, stems=stems)
