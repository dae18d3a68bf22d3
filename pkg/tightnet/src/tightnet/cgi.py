"""Reader/writer for the CGI1 geometry-image container.

Layout: 4-byte magic ``CGI1``, then a little-endian ``<IIII`` header
(width, height, channel count, uv layout version), then each channel as a
1-byte name length, the UTF-8 name, and ``width*height`` float32 values in
row-major order.  The set of legal channel names is closed; files are
rejected rather than partially read when anything is off.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict

import numpy as np

MAGIC = b"CGI1"
HEADER = struct.Struct("<IIII")

# closed name set; index doubles as the canonical serialization order
KNOWN_CHANNELS = (
    "position.x", "position.y", "position.z",
    "normal.x", "normal.y", "normal.z",
    "color.r", "color.g", "color.b",
    "tightness.x", "tightness.y", "tightness.z",
    "mask.upper", "mask.lower",
    "valid",
)
_RANK = {name: i for i, name in enumerate(KNOWN_CHANNELS)}

VECTOR_GROUPS = {
    "position": ("position.x", "position.y", "position.z"),
    "normal": ("normal.x", "normal.y", "normal.z"),
    "color": ("color.r", "color.g", "color.b"),
    "tightness": ("tightness.x", "tightness.y", "tightness.z"),
}

MAX_PIXELS = 1 << 28


class CGIError(Exception):
    """Malformed or inconsistent geometry-image file."""


@dataclass
class ChannelImage:
    """A geometry image: named float32 planes over one fixed raster."""
    width: int
    height: int
    uv_version: int
    channels: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name in self.channels:
            if name not in _RANK:
                raise CGIError(f"channel name '{name}' is not in the format")
            plane = np.ascontiguousarray(self.channels[name], dtype=np.float32)
            if plane.shape != (self.height, self.width):
                raise CGIError(
                    f"channel '{name}' is {plane.shape}, raster is "
                    f"({self.height}, {self.width})")
            self.channels[name] = plane
        self.uv_version = int(self.uv_version) & 0xFFFFFFFF

    def has(self, name: str) -> bool:
        return name in self.channels

    def plane(self, name: str) -> np.ndarray:
        if name not in self.channels:
            raise CGIError(f"channel '{name}' not present")
        return self.channels[name]

    def vector(self, prefix: str) -> np.ndarray:
        """(h, w, 3) stack of one vector group."""
        names = VECTOR_GROUPS[prefix]
        return np.stack([self.plane(n) for n in names], axis=-1)


def write_cgi(img: ChannelImage, path) -> None:
    """Serialize with channels in canonical order so output bytes are a pure
    function of the image contents."""
    names = sorted(img.channels, key=_RANK.__getitem__)
    blob = bytearray(MAGIC)
    blob += HEADER.pack(img.width, img.height, len(names), img.uv_version)
    for name in names:
        raw = name.encode("utf-8")
        blob += bytes((len(raw),))
        blob += raw
        blob += np.ascontiguousarray(img.channels[name], "<f4").tobytes()
    Path(path).write_bytes(bytes(blob))


def read_cgi(path) -> ChannelImage:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise CGIError(f"{path}: missing CGI1 magic")
    if len(blob) < 4 + HEADER.size:
        raise CGIError(f"{path}: header cut short at {len(blob)} bytes")
    width, height, n_channels, uv_version = HEADER.unpack_from(blob, 4)
    if width == 0 or height == 0 or width * height > MAX_PIXELS:
        raise CGIError(f"{path}: implausible raster {width}x{height}")
    plane_len = width * height * 4
    pos = 4 + HEADER.size
    channels: Dict[str, np.ndarray] = {}
    for _ in range(n_channels):
        if pos >= len(blob):
            raise CGIError(f"{path}: channel table cut short")
        name_len = blob[pos]
        pos += 1
        if pos + name_len > len(blob):
            raise CGIError(f"{path}: channel name cut short")
        try:
            name = blob[pos:pos + name_len].decode("utf-8")
        except UnicodeDecodeError:
            raise CGIError(f"{path}: channel name is not UTF-8")
        pos += name_len
        if name not in _RANK:
            raise CGIError(f"{path}: channel name '{name}' is not in the format")
        if name in channels:
            raise CGIError(f"{path}: duplicate channel '{name}'")
        if pos + plane_len > len(blob):
            raise CGIError(f"{path}: channel '{name}' data cut short")
        plane = np.frombuffer(blob, dtype="<f4", count=width * height,
                              offset=pos).reshape(height, width)
        channels[name] = plane.astype(np.float32)
        pos += plane_len
    if pos != len(blob):
        raise CGIError(f"{path}: {len(blob) - pos} trailing bytes")
    return ChannelImage(width=width, height=height, uv_version=uv_version,
                        channels=channels)
