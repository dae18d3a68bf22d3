"""Structured-text (key/value tree) serialization helpers.

All on-disk text metadata (template rigs, joints, configs, run reports)
goes through these: UTF-8 YAML documents, floats rendered as decimals with
9 significant digits (enough to round-trip float32 exactly), keys emitted
in insertion order so writes are deterministic.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

try:
    from yaml import CSafeDumper as _Dumper
    from yaml import CSafeLoader as _Loader
except ImportError:  # pragma: no cover - libyaml is normally present
    from yaml import SafeDumper as _Dumper
    from yaml import SafeLoader as _Loader


class _TreeDumper(_Dumper):
    pass


def _float_representer(dumper, value):
    if value != value:
        text = ".nan"
    elif value in (float("inf"), float("-inf")):
        text = ".inf" if value > 0 else "-.inf"
    else:
        text = format(value, ".9g")
    return dumper.represent_scalar("tag:yaml.org,2002:float", text)


_TreeDumper.add_representer(float, _float_representer)
_TreeDumper.add_representer(
    dict, lambda d, data: d.represent_mapping("tag:yaml.org,2002:map",
                                              data.items()))


def to_plain(obj):
    """Recursively convert numpy scalars/arrays into plain python types."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dump_tree(data: dict) -> str:
    return yaml.dump(to_plain(data), Dumper=_TreeDumper, sort_keys=False,
                     default_flow_style=None, width=100)


def save_tree(path, data: dict) -> None:
    Path(path).write_text(dump_tree(data), encoding="utf-8")


def load_tree(path_or_text) -> dict:
    if isinstance(path_or_text, (str, Path)) and "\n" not in str(path_or_text):
        text = Path(path_or_text).read_text(encoding="utf-8")
    else:
        text = str(path_or_text)
    out = yaml.load(text, Loader=_Loader)
    if out is None:
        return {}
    if not isinstance(out, dict):
        raise ValueError("expected a key/value tree document")
    return out
