"""Conditional-GAN training for the tightness generator.

Objective is the pix2pix blend: weighted L1 reconstruction (weight 100)
plus adversarial terms (weight 1) from a PatchGAN critic and a pyramid
full-image critic.  With adversarial weight 0 the loop degenerates to pure
L1 regression and the critics are never built.  The L1 is averaged over
covered pixels only — background is identically zero on both sides and
would otherwise dilute the loss.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from .data import (N_INPUT_PLANES, N_TARGET_PLANES, PairedDataset,
                   load_dataset)
from .model import PatchDiscriminator, PyramidDiscriminator, UNetGenerator


@dataclass
class TrainConfig:
    steps: int = 2000
    batch: int = 2
    lr: float = 2e-4
    beta1: float = 0.5
    l1_weight: float = 100.0
    adv_weight: float = 1.0
    base: int = 64
    depth: int = 6
    tightness_scale: float = 20.0
    seed: int = 0
    device: str = "cpu"
    log_every: int = 25

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if self.tightness_scale <= 0:
            raise ValueError("tightness_scale must be positive")


def masked_l1(pred: torch.Tensor, target: torch.Tensor,
              valid: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over covered pixels, averaged across planes."""
    num = (torch.abs(pred - target) * valid).sum()
    den = valid.sum() * pred.shape[1]
    return num / den.clamp_min(1.0)


def _batches(n: int, batch: int, steps: int, seed: int):
    """Deterministic sampler: reshuffled epochs, wrapped to the step count."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    at = 0
    for _ in range(steps):
        take = []
        while len(take) < min(batch, n):
            if at == len(order):
                order = rng.permutation(n)
                at = 0
            take.append(order[at])
            at += 1
        yield np.asarray(take)


def train(data_dir, out_path, cfg: TrainConfig = None,
          pairs: Optional[Sequence[Tuple[Path, Path]]] = None) -> Dict:
    """Fit the generator on a pair directory and write checkpoint + curves.

    Returns a summary with the initial/final reconstruction L1 and the
    artifact paths.  Dataset validation happens up front: inconsistent
    resolution or uv version aborts before any optimizer state exists.
    """
    cfg = cfg or TrainConfig()
    ds: PairedDataset = load_dataset(data_dir, cfg.tightness_scale,
                                     pairs=pairs)
    device = torch.device(cfg.device)
    torch.manual_seed(cfg.seed)

    gen = UNetGenerator(N_INPUT_PLANES, N_TARGET_PLANES,
                        base=cfg.base, depth=cfg.depth).to(device)
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr,
                             betas=(cfg.beta1, 0.999))
    adversarial = cfg.adv_weight > 0
    if adversarial:
        d_patch = PatchDiscriminator(N_INPUT_PLANES + N_TARGET_PLANES,
                                     base=cfg.base).to(device)
        d_pyr = PyramidDiscriminator(N_INPUT_PLANES + N_TARGET_PLANES,
                                     base=cfg.base).to(device)
        opt_d = torch.optim.Adam(
            list(d_patch.parameters()) + list(d_pyr.parameters()),
            lr=cfg.lr, betas=(cfg.beta1, 0.999))
        bce = nn.BCEWithLogitsLoss()

    inputs = torch.from_numpy(ds.inputs).to(device)
    targets = torch.from_numpy(ds.targets).to(device)
    valid = torch.from_numpy(ds.valid).to(device)

    curves: Dict[str, List[float]] = {"l1": [], "g_adv": [],
                                      "d_patch": [], "d_pyramid": []}
    gen.train()
    for step, idx in enumerate(_batches(len(ds), cfg.batch, cfg.steps,
                                        cfg.seed)):
        x, y, v = inputs[idx], targets[idx], valid[idx]
        pred = gen(x)

        d_patch_loss = d_pyr_loss = 0.0
        if adversarial:
            fake = torch.cat([x, pred.detach()], dim=1)
            real = torch.cat([x, y], dim=1)
            opt_d.zero_grad(set_to_none=True)
            dp_real, dp_fake = d_patch(real), d_patch(fake)
            dy_real, dy_fake = d_pyr(real), d_pyr(fake)
            loss_dp = 0.5 * (bce(dp_real, torch.ones_like(dp_real)) +
                             bce(dp_fake, torch.zeros_like(dp_fake)))
            loss_dy = 0.5 * (bce(dy_real, torch.ones_like(dy_real)) +
                             bce(dy_fake, torch.zeros_like(dy_fake)))
            (loss_dp + loss_dy).backward()
            opt_d.step()
            d_patch_loss, d_pyr_loss = loss_dp.item(), loss_dy.item()

        opt_g.zero_grad(set_to_none=True)
        l1 = masked_l1(pred, y, v)
        g_adv = torch.zeros((), device=device)
        if adversarial:
            fake = torch.cat([x, pred], dim=1)
            sp, sy = d_patch(fake), d_pyr(fake)
            g_adv = 0.5 * (bce(sp, torch.ones_like(sp)) +
                           bce(sy, torch.ones_like(sy)))
        (cfg.l1_weight * l1 + cfg.adv_weight * g_adv).backward()
        opt_g.step()

        curves["l1"].append(l1.item())
        curves["g_adv"].append(float(g_adv.item()))
        curves["d_patch"].append(float(d_patch_loss))
        curves["d_pyramid"].append(float(d_pyr_loss))
        if cfg.log_every and (step % cfg.log_every == 0
                              or step == cfg.steps - 1):
            print(f"step {step:5d}  l1 {l1.item():.5f}  "
                  f"g_adv {float(g_adv.item()):.4f}  "
                  f"d {d_patch_loss:.4f}/{d_pyr_loss:.4f}")

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    checkpoint = {
        "generator": gen.state_dict(),
        "model": {"in_ch": N_INPUT_PLANES, "out_ch": N_TARGET_PLANES,
                  "base": cfg.base, "depth": cfg.depth},
        "tightness_scale": cfg.tightness_scale,
        "uv_version": int(ds.uv_version),
        "resolution": [int(ds.width), int(ds.height)],
        "config": asdict(cfg),
        "initial_l1": curves["l1"][0],
        "final_l1": curves["l1"][-1],
    }
    torch.save(checkpoint, out_path)
    losses_path = out_path.with_name(out_path.name + ".losses.json")
    losses_path.write_text(json.dumps(curves))

    return {
        "checkpoint": str(out_path),
        "losses": str(losses_path),
        "n_pairs": len(ds),
        "steps": cfg.steps,
        "initial_l1": curves["l1"][0],
        "final_l1": curves["l1"][-1],
        "l1_curve": curves["l1"],
    }
