"""Super-resolution generator: residual-in-residual trunk plus nearest-
neighbor upsampling stages, with a global skip so a freshly constructed
model is exactly the nearest-neighbor upscaler (final conv zero-initialized).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

VALID_SCALES = (2, 4)


@dataclass(frozen=True)
class SRConfig:
    scale: int = 4
    channels: int = 24
    n_blocks: int = 4
    residual_scale: float = 0.2

    def __post_init__(self):
        if self.scale not in VALID_SCALES:
            raise ValueError(f"scale must be one of {VALID_SCALES}")


class ResidualDenseBlock(nn.Module):
    """Two-conv residual unit with a scaled skip (residual-in-residual)."""

    def __init__(self, c, residual_scale):
        super().__init__()
        self.conv1 = nn.Conv2d(c, c, 3, 1, 1)
        self.conv2 = nn.Conv2d(c, c, 3, 1, 1)
        self.act = nn.LeakyReLU(0.2, inplace=True)
        self.residual_scale = residual_scale

    def forward(self, x):
        y = self.conv2(self.act(self.conv1(x)))
        return x + self.residual_scale * y


class SRGenerator(nn.Module):
    """(B, 3, H, W) -> (B, 3, s*H, s*W); output = NN-upscale(input) + learned
    residual detail."""

    def __init__(self, cfg: SRConfig = SRConfig()):
        super().__init__()
        self.cfg = cfg
        c = cfg.channels
        self.conv_in = nn.Conv2d(3, c, 3, 1, 1)
        self.trunk = nn.Sequential(*(ResidualDenseBlock(c, cfg.residual_scale) for _ in range(cfg.n_blocks)))
        ups = []
        n_stages = {2: 1, 4: 2}[cfg.scale]
        for _ in range(n_stages):
            ups += [nn.Upsample(scale_factor=2, mode="nearest"), nn.Conv2d(c, c, 3, 1, 1), nn.LeakyReLU(0.2, inplace=True)]
        self.upsampler = nn.Sequential(*ups)
        self.conv_out = nn.Conv2d(c, 3, 3, 1, 1)
        nn.init.zeros_(self.conv_out.weight)
        nn.init.zeros_(self.conv_out.bias)

    def forward(self, x):
        base = F.interpolate(x, scale_factor=self.cfg.scale, mode="nearest")
        y = self.conv_in(x)
        y = self.trunk(y)
        y = self.upsampler(y)
        return base + self.conv_out(y)
