"""U-Net generator and the two adversaries for tightness image translation.

The generator maps the 8-plane conditioning stack to 5 output planes:
three linear tightness components and two sigmoid-squashed garment masks.
It is fully convolutional — inputs are zero-padded up to the next multiple
of the downsampling factor and cropped back, so any raster size works and
the output raster always equals the input raster.

Adversaries follow the pix2pix recipe: a stride-2 PatchGAN over the
concatenated condition/prediction stack, plus a full-image discriminator
evaluated on a 3-level average-pooled pyramid whose per-level scores are
averaged.  Both use instance normalization, which keeps every module
independent of batch composition.
"""

from typing import List

import torch
import torch.nn.functional as F
from torch import nn

N_TIGHTNESS = 3
N_MASK = 2


def init_weights(module: nn.Module) -> None:
    """Gaussian(0, 0.02) conv init, the pix2pix convention."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.normal_(m.weight, 0.0, 0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.InstanceNorm2d) and m.affine:
            nn.init.normal_(m.weight, 1.0, 0.02)
            nn.init.zeros_(m.bias)


def _enc_widths(base: int, depth: int) -> List[int]:
    return [min(base * 2 ** i, base * 8) for i in range(depth)]


class UNetGenerator(nn.Module):
    def __init__(self, in_ch: int = 8, out_ch: int = 5, base: int = 64,
                 depth: int = 6):
        super().__init__()
        if depth < 2:
            raise ValueError("generator needs depth >= 2")
        widths = _enc_widths(base, depth)
        self.depth = depth
        self.downs = nn.ModuleList()
        prev = in_ch
        for i, w in enumerate(widths):
            inner = i in (0, depth - 1)  # no norm on the rim blocks
            block = [nn.Conv2d(prev, w, 4, 2, 1, bias=inner)]
            if not inner:
                block.append(nn.InstanceNorm2d(w, affine=True))
            block.append(nn.LeakyReLU(0.2, inplace=True))
            self.downs.append(nn.Sequential(*block))
            prev = w
        self.ups = nn.ModuleList()
        for i in range(depth - 1, 0, -1):
            cin = widths[i] if i == depth - 1 else widths[i] * 2
            block = [nn.ConvTranspose2d(cin, widths[i - 1], 4, 2, 1),
                     nn.InstanceNorm2d(widths[i - 1], affine=True),
                     nn.ReLU(inplace=True)]
            if i >= depth - 3:
                block.append(nn.Dropout(0.5))
            self.ups.append(nn.Sequential(*block))
        self.head = nn.ConvTranspose2d(widths[0] * 2, out_ch, 4, 2, 1)
        init_weights(self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        n, c, h, w = x.shape
        m = 2 ** self.depth
        ph, pw = (-h) % m, (-w) % m
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph))
        skips = []
        for down in self.downs:
            x = down(x)
            skips.append(x)
        y = skips[-1]
        for i, up in enumerate(self.ups):
            y = up(y)
            y = torch.cat([y, skips[-2 - i]], dim=1)
        y = self.head(y)
        y = y[:, :, :h, :w]
        return torch.cat([y[:, :N_TIGHTNESS],
                          torch.sigmoid(y[:, N_TIGHTNESS:])], dim=1)


class PatchDiscriminator(nn.Module):
    """70x70-receptive-field patch critic over condition+prediction."""

    def __init__(self, in_ch: int = 13, base: int = 64, n_layers: int = 3):
        super().__init__()
        layers = [nn.Conv2d(in_ch, base, 4, 2, 1),
                  nn.LeakyReLU(0.2, inplace=True)]
        prev = base
        for i in range(1, n_layers + 1):
            w = min(base * 2 ** i, base * 8)
            stride = 2 if i < n_layers else 1
            layers += [nn.Conv2d(prev, w, 4, stride, 1, bias=False),
                       nn.InstanceNorm2d(w, affine=True),
                       nn.LeakyReLU(0.2, inplace=True)]
            prev = w
        layers.append(nn.Conv2d(prev, 1, 4, 1, 1))
        self.net = nn.Sequential(*layers)
        init_weights(self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class PyramidDiscriminator(nn.Module):
    """Full-image critic averaged over a 3-level average-pooled pyramid.

    One trunk is shared across levels; each level contributes a single
    logit per sample and the levels are averaged.
    """

    def __init__(self, in_ch: int = 13, base: int = 64, levels: int = 3):
        super().__init__()
        self.levels = levels
        trunk = [nn.Conv2d(in_ch, base, 4, 2, 1),
                 nn.LeakyReLU(0.2, inplace=True)]
        prev = base
        for i in range(1, 3):
            w = min(base * 2 ** i, base * 8)
            # no norm on the deepest block: the coarsest pyramid level can
            # shrink it to a single spatial element
            trunk.append(nn.Conv2d(prev, w, 4, 2, 1, bias=(i == 2)))
            if i < 2:
                trunk.append(nn.InstanceNorm2d(w, affine=True))
            trunk.append(nn.LeakyReLU(0.2, inplace=True))
            prev = w
        self.trunk = nn.Sequential(*trunk)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.score = nn.Conv2d(prev, 1, 1)
        init_weights(self)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        scores = []
        level = x
        for i in range(self.levels):
            if i:
                level = F.avg_pool2d(level, 2)
            s = self.score(self.pool(self.trunk(level)))
            scores.append(s.flatten(1))
        return torch.stack(scores, dim=0).mean(dim=0)
