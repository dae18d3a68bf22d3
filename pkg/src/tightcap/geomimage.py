"""Multi-channel geometry images over the template UV atlas.

Forward mapping rasterizes per-vertex attributes into fixed named planes
(barycentric interpolation, deterministic face order with last-write-wins
on shared texels); texels no triangle covers are filled from their nearest
covered texel but stay 0 in the `valid` plane. The inverse mapping is a
bilinear lookup at each vertex's UV.

File container ("CGI1"): magic, then little-endian u32 width / height /
channel count / uv-version hash, then per channel a u8-length-prefixed
UTF-8 name followed by width*height float32 little-endian values in
row-major order. No compression, bit-exact round trips.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import cv2
import numpy as np

from .template import SkinnedTemplate

MAGIC = b"CGI1"

CHANNEL_ORDER = (
    "position.x", "position.y", "position.z",
    "normal.x", "normal.y", "normal.z",
    "color.r", "color.g", "color.b",
    "tightness.x", "tightness.y", "tightness.z",
    "mask.upper", "mask.lower",
    "valid",
)
_VECTOR_SUFFIX = {"position": "xyz", "normal": "xyz", "color": "rgb",
                  "tightness": "xyz"}


class GIError(ValueError):
    pass


class GIFormatError(GIError):
    def __init__(self, path, message: str, offset: Optional[int] = None):
        loc = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"{path}: {message}{loc}")
        self.path = str(path)
        self.offset = offset


@dataclass
class GeometryImage:
    width: int
    height: int
    channels: Dict[str, np.ndarray]
    uv_version: int

    def __post_init__(self):
        for name, plane in self.channels.items():
            if name not in CHANNEL_ORDER:
                raise GIError(f"unknown channel '{name}'")
            plane = np.ascontiguousarray(plane, dtype=np.float32)
            if plane.shape != (self.height, self.width):
                raise GIError(
                    f"channel '{name}' shape {plane.shape} != "
                    f"({self.height}, {self.width})")
            self.channels[name] = plane
        self.uv_version = int(self.uv_version) & 0xFFFFFFFF

    def has(self, name: str) -> bool:
        return name in self.channels

    def plane(self, name: str) -> np.ndarray:
        if name not in self.channels:
            raise GIError(f"missing channel '{name}'")
        return self.channels[name]

    def vector(self, prefix: str) -> np.ndarray:
        """(h, w, 3) stack of a 3-channel group like position or tightness."""
        suffix = _VECTOR_SUFFIX[prefix]
        return np.stack([self.plane(f"{prefix}.{c}") for c in suffix], axis=-1)

    def bitwise_equal(self, other: "GeometryImage") -> bool:
        return (self.width == other.width and self.height == other.height
                and self.uv_version == other.uv_version
                and list(self.channels) == list(other.channels)
                and all(np.array_equal(self.channels[k].view(np.uint32),
                                       other.channels[k].view(np.uint32))
                        for k in self.channels))


# ------------------------------------------------------------ rasterizer

def _uv_to_pixels(uv: np.ndarray, width: int, height: int) -> np.ndarray:
    pix = np.empty_like(uv)
    pix[:, 0] = uv[:, 0] * width - 0.5
    pix[:, 1] = uv[:, 1] * height - 0.5
    return pix


def _flatten_attrs(tpl: SkinnedTemplate, attrs: Dict[str, np.ndarray]
                   ) -> Dict[str, np.ndarray]:
    n = tpl.n_vertices
    planes: Dict[str, np.ndarray] = {}
    for key, value in attrs.items():
        value = np.asarray(value, dtype=np.float64)
        if len(value) != n:
            raise ValueError(
                f"attribute '{key}' has {len(value)} rows, expected {n}")
        if key in _VECTOR_SUFFIX:
            if value.shape != (n, 3):
                raise ValueError(f"attribute '{key}' must be (n, 3)")
            for i, c in enumerate(_VECTOR_SUFFIX[key]):
                planes[f"{key}.{c}"] = value[:, i]
        elif key in ("mask.upper", "mask.lower"):
            planes[key] = value.reshape(n)
        else:
            raise ValueError(f"unknown attribute '{key}'")
    return planes


def rasterize_gi(tpl: SkinnedTemplate, attrs: Dict[str, np.ndarray],
                 res: int = 224) -> GeometryImage:
    """Bake per-vertex attributes into named planes via the UV atlas."""
    planes = _flatten_attrs(tpl, attrs)
    names = [n for n in CHANNEL_ORDER if n in planes]
    vals = np.stack([planes[n] for n in names], axis=1)  # (n, C)
    w = h = int(res)
    buf = np.zeros((h, w, len(names)), dtype=np.float64)
    covered = np.zeros((h, w), dtype=bool)
    face_buf = np.full((h, w), -1, dtype=np.int64)
    pix = _uv_to_pixels(tpl.uv, w, h)

    for fi, face in enumerate(tpl.mesh.faces):
        p = pix[face]                                     # (3, 2)
        x0 = max(int(np.ceil(p[:, 0].min() - 1e-9)), 0)
        x1 = min(int(np.floor(p[:, 0].max() + 1e-9)), w - 1)
        y0 = max(int(np.ceil(p[:, 1].min() - 1e-9)), 0)
        y1 = min(int(np.floor(p[:, 1].max() + 1e-9)), h - 1)
        if x1 < x0 or y1 < y0:
            continue
        denom = ((p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
                 - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1]))
        if abs(denom) < 1e-18:
            continue
        xs = np.arange(x0, x1 + 1)
        ys = np.arange(y0, y1 + 1)
        gx, gy = np.meshgrid(xs, ys)
        dx0, dy0 = gx - p[0, 0], gy - p[0, 1]
        b1 = (dx0 * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * dy0) / denom
        b2 = ((p[1, 0] - p[0, 0]) * dy0 - dx0 * (p[1, 1] - p[0, 1])) / denom
        b0 = 1.0 - b1 - b2
        inside = (b0 >= -1e-9) & (b1 >= -1e-9) & (b2 >= -1e-9)
        if not inside.any():
            continue
        iy, ix = np.nonzero(inside)
        bc = np.stack([b0[iy, ix], b1[iy, ix], b2[iy, ix]], axis=1)
        buf[gy[iy, ix], gx[iy, ix]] = bc @ vals[face]
        covered[gy[iy, ix], gx[iy, ix]] = True
        face_buf[gy[iy, ix], gx[iy, ix]] = fi

    if not covered.any():
        raise ValueError("UV atlas covers no texel at this resolution")

    # fill uncovered texels from their nearest covered texel; inside a small
    # band the owning face's plane equation is extended instead of copied,
    # so boundary vertices still resample linear fields exactly. the valid
    # plane keeps the truth about which texels are real
    src = (~covered).astype(np.uint8)
    dist, labels = cv2.distanceTransformWithLabels(
        src, cv2.DIST_L2, cv2.DIST_MASK_PRECISE,
        labelType=cv2.DIST_LABEL_PIXEL)
    lut = np.zeros(labels.max() + 1, dtype=np.int64)
    flat_ids = np.flatnonzero(covered.ravel())
    lut[labels.ravel()[flat_ids]] = flat_ids
    fill_from = lut[labels.ravel()[~covered.ravel()]]
    flat_buf = buf.reshape(-1, len(names))
    flat_buf[~covered.ravel()] = flat_buf[fill_from]

    band = np.flatnonzero(~covered.ravel() & (dist.ravel() <= 3.0))
    if band.size:
        fids = face_buf.ravel()[lut[labels.ravel()[band]]]
        tri = tpl.mesh.faces[fids]                       # (m, 3)
        p = pix[tri]                                     # (m, 3, 2)
        qx = (band % w).astype(np.float64)
        qy = (band // w).astype(np.float64)
        denom = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                 - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        dx0, dy0 = qx - p[:, 0, 0], qy - p[:, 0, 1]
        b1 = (dx0 * (p[:, 2, 1] - p[:, 0, 1])
              - (p[:, 2, 0] - p[:, 0, 0]) * dy0) / denom
        b2 = ((p[:, 1, 0] - p[:, 0, 0]) * dy0
              - dx0 * (p[:, 1, 1] - p[:, 0, 1])) / denom
        bc = np.stack([1.0 - b1 - b2, b1, b2], axis=1)
        flat_buf[band] = np.einsum("mk,mkc->mc", bc, vals[tri])

    channels = {name: buf[:, :, i].astype(np.float32)
                for i, name in enumerate(names)}
    if "normal.x" in channels:
        nrm = np.stack([channels[f"normal.{c}"] for c in "xyz"], axis=-1)
        ln = np.linalg.norm(nrm, axis=-1, keepdims=True)
        nrm = np.where(ln > 1e-12, nrm / np.where(ln > 1e-12, ln, 1.0), nrm)
        for i, c in enumerate("xyz"):
            channels[f"normal.{c}"] = np.ascontiguousarray(nrm[..., i])
    channels["valid"] = covered.astype(np.float32)
    ordered = {n: channels[n] for n in CHANNEL_ORDER if n in channels}
    return GeometryImage(width=w, height=h, channels=ordered,
                         uv_version=tpl.uv_version())


def inverse_gi(gi: GeometryImage, tpl: SkinnedTemplate) -> Dict[str, np.ndarray]:
    """Per-vertex attributes by bilinear lookup at each vertex's UV."""
    if gi.uv_version != tpl.uv_version():
        raise GIError(
            f"uv version mismatch: image {gi.uv_version:#010x} vs "
            f"template {tpl.uv_version():#010x}")
    pix = _uv_to_pixels(tpl.uv, gi.width, gi.height)
    px = np.clip(pix[:, 0], 0.0, gi.width - 1.0)
    py = np.clip(pix[:, 1], 0.0, gi.height - 1.0)
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    x1 = np.minimum(x0 + 1, gi.width - 1)
    y1 = np.minimum(y0 + 1, gi.height - 1)
    fx = (px - x0)[:, None]
    fy = (py - y0)[:, None]

    def sample(plane: np.ndarray) -> np.ndarray:
        p = plane.astype(np.float64)
        top = p[y0, x0][:, None] * (1 - fx) + p[y0, x1][:, None] * fx
        bot = p[y1, x0][:, None] * (1 - fx) + p[y1, x1][:, None] * fx
        return (top * (1 - fy) + bot * fy)[:, 0]

    out: Dict[str, np.ndarray] = {}
    for prefix, suffix in _VECTOR_SUFFIX.items():
        if gi.has(f"{prefix}.{suffix[0]}"):
            out[prefix] = np.stack(
                [sample(gi.plane(f"{prefix}.{c}")) for c in suffix], axis=1)
    for name in ("mask.upper", "mask.lower", "valid"):
        if gi.has(name):
            out[name] = sample(gi.plane(name))
    return out


# -------------------------------------------------------------- file I/O

def write_gi(gi: GeometryImage, path) -> None:
    parts = [MAGIC,
             struct.pack("<IIII", gi.width, gi.height, len(gi.channels),
                         gi.uv_version)]
    for name, plane in gi.channels.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<B", len(raw)))
        parts.append(raw)
        parts.append(np.ascontiguousarray(plane, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_gi(path) -> GeometryImage:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise GIFormatError(path, "bad magic (not a CGI1 file)", 0)
    if len(data) < 20:
        raise GIFormatError(path, "truncated header", len(data))
    width, height, n_channels, uv_version = struct.unpack_from("<IIII", data, 4)
    if width == 0 or height == 0 or width * height > (1 << 28):
        raise GIFormatError(path, f"implausible size {width}x{height}", 4)
    off = 20
    plane_bytes = width * height * 4
    channels: Dict[str, np.ndarray] = {}
    for _ in range(n_channels):
        if off + 1 > len(data):
            raise GIFormatError(path, "truncated channel header", off)
        name_len = data[off]
        off += 1
        if off + name_len > len(data):
            raise GIFormatError(path, "truncated channel name", off)
        try:
            name = data[off:off + name_len].decode("utf-8")
        except UnicodeDecodeError:
            raise GIFormatError(path, "channel name not UTF-8", off) from None
        off += name_len
        if name not in CHANNEL_ORDER:
            raise GIFormatError(path, f"unknown channel '{name}'",
                                off - name_len)
        if name in channels:
            raise GIFormatError(path, f"duplicate channel '{name}'",
                                off - name_len)
        if off + plane_bytes > len(data):
            raise GIFormatError(path, f"truncated data for channel '{name}'",
                                off)
        plane = np.frombuffer(data, dtype="<f4", count=width * height,
                              offset=off).reshape(height, width)
        channels[name] = plane.copy()
        off += plane_bytes
    if off != len(data):
        raise GIFormatError(path, f"{len(data) - off} trailing bytes", off)
    return GeometryImage(width=width, height=height, channels=channels,
                         uv_version=uv_version)
