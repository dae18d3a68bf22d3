"""Learned clothing-tightness predictor speaking the CGI1 geometry-image
container.

The package is file-coupled only: it reads clothed-geometry images, writes
predicted tightness/mask images, and never imports the reconstruction
pipeline that produces or consumes those files.
"""

from .cgi import CGIError, ChannelImage, read_cgi, write_cgi
from .data import DatasetError, PairedDataset, discover_pairs
from .model import PatchDiscriminator, PyramidDiscriminator, UNetGenerator
from .train import TrainConfig, train
from .infer import InferenceError, infer

__all__ = [
    "CGIError", "ChannelImage", "read_cgi", "write_cgi",
    "DatasetError", "PairedDataset", "discover_pairs",
    "UNetGenerator", "PatchDiscriminator", "PyramidDiscriminator",
    "TrainConfig", "train",
    "InferenceError", "infer",
]
