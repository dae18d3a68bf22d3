import json

import numpy as np
import pytest

from tightnet.cgi import read_cgi, write_cgi
from tightnet.cli import main
from tightnet.data import DatasetError
from tightnet.infer import InferenceError, infer
from tightnet.train import TrainConfig, train

from tnhelpers import UV, synthetic_pair, write_pairs

TINY = dict(batch=2, base=8, depth=4, log_every=0)


@pytest.fixture
def pair_dir(tmp_path):
    write_pairs(tmp_path, 3)
    return tmp_path


def test_train_writes_checkpoint_and_curves(pair_dir, tmp_path):
    out = tmp_path / "ckpt.pt"
    summary = train(pair_dir, out, TrainConfig(steps=30, **TINY))
    assert out.exists()
    curves = json.loads((tmp_path / "ckpt.pt.losses.json").read_text())
    assert len(curves["l1"]) == 30
    assert summary["final_l1"] < summary["initial_l1"]
    assert summary["n_pairs"] == 3


def test_pure_l1_training_is_non_increasing_in_ema(tmp_path):
    write_pairs(tmp_path, 1)
    summary = train(tmp_path, tmp_path / "ckpt.pt",
                    TrainConfig(steps=150, adv_weight=0.0, batch=1,
                                base=16, depth=4, log_every=0))
    l1 = summary["l1_curve"]
    ema = [l1[0]]
    for v in l1[1:]:
        ema.append(0.95 * ema[-1] + 0.05 * v)
    drift = np.diff(ema)
    assert (drift[10:] <= 1e-6).all()
    assert ema[-1] < 0.5 * ema[0]


def test_training_reproducible_for_fixed_seed(pair_dir, tmp_path):
    cfg = TrainConfig(steps=12, seed=11, **TINY)
    a = train(pair_dir, tmp_path / "a.pt", cfg)
    b = train(pair_dir, tmp_path / "b.pt", cfg)
    assert a["l1_curve"] == b["l1_curve"]


def test_infer_round_trip_and_determinism(pair_dir, tmp_path):
    ckpt = tmp_path / "ckpt.pt"
    train(pair_dir, ckpt, TrainConfig(steps=25, **TINY))
    src = pair_dir / "pair_0001_input.cgi"
    out1, out2 = tmp_path / "p1.cgi", tmp_path / "p2.cgi"
    infer(src, ckpt, out1)
    infer(src, ckpt, out2)
    assert out1.read_bytes() == out2.read_bytes()
    pred = read_cgi(out1)
    inp = read_cgi(src)
    assert (pred.width, pred.height) == (inp.width, inp.height)
    assert pred.uv_version == inp.uv_version
    assert set(pred.channels) == {"tightness.x", "tightness.y", "tightness.z",
                                  "mask.upper", "mask.lower", "valid"}
    masks = np.stack([pred.plane("mask.upper"), pred.plane("mask.lower")])
    assert masks.min() >= 0.0 and masks.max() <= 1.0
    background = inp.plane("valid") < 0.5
    for plane in pred.channels.values():
        assert not plane[background].any()


def test_infer_rejects_uv_mismatch(pair_dir, tmp_path):
    ckpt = tmp_path / "ckpt.pt"
    train(pair_dir, ckpt, TrainConfig(steps=2, **TINY))
    rogue_in, _ = synthetic_pair(uv_version=UV + 9, seed=0)
    rogue = tmp_path / "rogue_input.cgi"
    write_cgi(rogue_in, rogue)
    with pytest.raises(InferenceError, match="uv version"):
        infer(rogue, ckpt, tmp_path / "out.cgi")


def test_infer_rejects_missing_channels(pair_dir, tmp_path):
    ckpt = tmp_path / "ckpt.pt"
    train(pair_dir, ckpt, TrainConfig(steps=2, **TINY))
    gi_in, _ = synthetic_pair(seed=0)
    del gi_in.channels["normal.z"]
    bare = tmp_path / "bare_input.cgi"
    write_cgi(gi_in, bare)
    with pytest.raises(DatasetError, match="normal.z"):
        infer(bare, ckpt, tmp_path / "out.cgi")


def test_cli_train_then_infer(pair_dir, tmp_path, capsys):
    ckpt = tmp_path / "ckpt.pt"
    rc = main(["train", "--data", str(pair_dir), "--out", str(ckpt),
               "--steps", "3", "--batch", "2", "--base", "8",
               "--depth", "4", "--log-every", "0"])
    assert rc == 0
    out = tmp_path / "pred.cgi"
    rc = main(["infer", "--in", str(pair_dir / "pair_0000_input.cgi"),
               "--ckpt", str(ckpt), "--out", str(out)])
    assert rc == 0
    assert out.exists()
    logs = capsys.readouterr().out
    assert "train:" in logs and "infer:" in logs


def test_cli_reports_runtime_failures(tmp_path, capsys):
    rc = main(["train", "--data", str(tmp_path / "missing"),
               "--out", str(tmp_path / "x.pt")])
    assert rc == 1
    assert "tightnet:" in capsys.readouterr().err


def test_cli_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--data"])
    assert exc.value.code == 2
