"""Colorization networks: a residual U-Net generator with self-attention
that predicts chrominance from luminance, and a patch-wise convolutional
discriminator.

The generator's final layer is zero-initialized so an untrained model
returns zero chrominance (the identity gray image); outputs are bounded to
[-128, 128] by a scaled tanh.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .losses import self_attention


@dataclass(frozen=True)
class ColorizerConfig:
    widths: tuple = (16, 32, 64)
    depths: tuple = (1, 1, 1)  # residual blocks per stage
    attention: bool = True
    relativistic: bool = False  # relativistic-average adversarial objective

    @classmethod
    def toy(cls) -> "ColorizerConfig":
        return cls()

    @classmethod
    def full(cls) -> "ColorizerConfig":
        # encoder mirrors a 34-layer residual network's stage layout
        return cls(widths=(64, 128, 256, 512), depths=(3, 4, 6, 3))

    @property
    def downsample_factor(self) -> int:
        return 2 ** (len(self.widths) - 1)


class ResidualBlock(nn.Module):
    def __init__(self, c):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(c, c, 3, 1, 1, bias=False),
            nn.BatchNorm2d(c),
            nn.ReLU(inplace=True),
            nn.Conv2d(c, c, 3, 1, 1, bias=False),
            nn.BatchNorm2d(c),
        )
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.act(x + self.body(x))


class SelfAttention2d(nn.Module):
    """Spatial self-attention over flattened feature maps with a residual
    gate (gamma starts at 0, so the block is the identity at init)."""

    def __init__(self, c, key_dim=None):
        super().__init__()
        self.key_dim = key_dim or max(1, c // 8)
        self.q = nn.Conv2d(c, self.key_dim, 1)
        self.k = nn.Conv2d(c, self.key_dim, 1)
        self.v = nn.Conv2d(c, c, 1)
        self.gamma = nn.Parameter(torch.zeros(1))

    def forward(self, x):
        b, c, h, w = x.shape
        q = self.q(x).reshape(b, self.key_dim, h * w).transpose(1, 2)
        k = self.k(x).reshape(b, self.key_dim, h * w).transpose(1, 2)
        v = self.v(x).reshape(b, c, h * w).transpose(1, 2)
        att = self_attention(q, k, v).transpose(1, 2).reshape(b, c, h, w)
        return x + self.gamma * att


def _conv_block(c_in, c_out, stride=1):
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, 3, stride, 1, bias=False),
        nn.BatchNorm2d(c_out),
        nn.ReLU(inplace=True),
    )


class ChromaUNet(nn.Module):
    """(B, 1, H, W) normalized luminance -> (B, 2, H, W) chrominance in
    [-128, 128]. H and W must be divisible by the downsample factor."""

    def __init__(self, cfg: ColorizerConfig = ColorizerConfig()):
        super().__init__()
        self.cfg = cfg
        widths = cfg.widths
        self.stem = _conv_block(1, widths[0])
        self.encoders = nn.ModuleList()
        for i in range(1, len(widths)):
            blocks = [_conv_block(widths[i - 1], widths[i], stride=2)]
            blocks += [ResidualBlock(widths[i]) for _ in range(cfg.depths[i])]
            self.encoders.append(nn.Sequential(*blocks))
        self.bottleneck = SelfAttention2d(widths[-1]) if cfg.attention else nn.Identity()
        self.decoders = nn.ModuleList()
        for i in range(len(widths) - 1, 0, -1):
            self.decoders.append(
                nn.Sequential(
                    nn.Upsample(scale_factor=2, mode="nearest"),
                    _conv_block(widths[i], widths[i - 1]),
                )
            )
        self.fusers = nn.ModuleList(
            _conv_block(2 * widths[i - 1], widths[i - 1]) for i in range(len(widths) - 1, 0, -1)
        )
        self.head = nn.Conv2d(widths[0], 2, 1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, x):
        skips = [self.stem(x)]
        for enc in self.encoders:
            skips.append(enc(skips[-1]))
        y = self.bottleneck(skips[-1])
        for dec, fuse, skip in zip(self.decoders, self.fusers, reversed(skips[:-1])):
            y = fuse(torch.cat([dec(y), skip], dim=1))
        return 128.0 * torch.tanh(self.head(y))


@dataclass(frozen=True)
class PatchDiscriminatorConfig:
    in_channels: int = 3
    layers: tuple = ((16, 2), (32, 1))  # (out_channels, stride) per conv

    @classmethod
    def full(cls, in_channels: int = 3) -> "PatchDiscriminatorConfig":
        # classic 70x70 receptive-field stride plan
        return cls(in_channels=in_channels, layers=((64, 2), (128, 2), (256, 2), (512, 1)))

    @property
    def receptive_field(self) -> int:
        rf, jump = 1, 1
        for _, stride in self.layers + ((1, 1),):  # final 1-channel conv
            rf += 3 * jump  # kernel 4 -> (k - 1) = 3
            jump *= stride
        return rf


class PatchDiscriminator(nn.Module):
    """Convolutional patch classifier; forward() yields per-patch realism
    probabilities, forward_logits() the raw map."""

    def __init__(self, cfg: PatchDiscriminatorConfig = PatchDiscriminatorConfig()):
        super().__init__()
        self.cfg = cfg
        layers = []
        c_prev = cfg.in_channels
        for i, (c, stride) in enumerate(cfg.layers):
            layers.append(nn.Conv2d(c_prev, c, 4, stride, 1, bias=(i == 0)))
            if i > 0:
                layers.append(nn.BatchNorm2d(c))
            layers.append(nn.LeakyReLU(0.2, inplace=True))
            c_prev = c
        layers.append(nn.Conv2d(c_prev, 1, 4, 1, 1))
        self.body = nn.Sequential(*layers)

    @property
    def receptive_field(self) -> int:
        return self.cfg.receptive_field

    def forward_logits(self, x):
        if min(x.shape[2], x.shape[3]) < self.receptive_field:
            raise ValueError(
                f"image {x.shape[3]}x{x.shape[2]} smaller than receptive field {self.receptive_field}"
            )
        return self.body(x)

    def forward(self, x):
        return torch.sigmoid(self.forward_logits(x))
