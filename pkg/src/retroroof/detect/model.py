"""Single-stage detector: cross-stage-partial backbone, PAN feature fusion,
and a dense anchor-free head emitting (4 box + 1 objectness + C class) values
per slot at strides 8/16/32."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import nn


@dataclass(frozen=True)
class DetectorConfig:
    in_channels: int = 3
    base_channels: int = 8
    depth: int = 1
    num_classes: int = 1
    strides: tuple = (8, 16, 32)
    obj_prior: float = 0.01  # initial objectness probability


class ConvBlock(nn.Module):
    def __init__(self, c_in, c_out, k=3, s=1):
        super().__init__()
        self.conv = nn.Conv2d(c_in, c_out, k, s, k // 2, bias=False)
        self.bn = nn.BatchNorm2d(c_out)
        self.act = nn.SiLU(inplace=True)

    def forward(self, x):
        return self.act(self.bn(self.conv(x)))


class Bottleneck(nn.Module):
    def __init__(self, c, shortcut=True):
        super().__init__()
        self.cv1 = ConvBlock(c, c, 3)
        self.cv2 = ConvBlock(c, c, 3)
        self.shortcut = shortcut

    def forward(self, x):
        y = self.cv2(self.cv1(x))
        return x + y if self.shortcut else y


class CSPBlock(nn.Module):
    """Split channels, run bottlenecks on one half, re-fuse (CSP style)."""

    def __init__(self, c_in, c_out, n=1, shortcut=True):
        super().__init__()
        c_mid = c_out // 2
        self.cv1 = ConvBlock(c_in, c_mid, 1)
        self.cv2 = ConvBlock(c_in, c_mid, 1)
        self.blocks = nn.Sequential(*(Bottleneck(c_mid, shortcut) for _ in range(n)))
        self.fuse = ConvBlock(2 * c_mid, c_out, 1)

    def forward(self, x):
        return self.fuse(torch.cat([self.blocks(self.cv1(x)), self.cv2(x)], dim=1))


class Backbone(nn.Module):
    """Strided stem + four CSP stages; returns features at /8, /16, /32."""

    def __init__(self, cfg: DetectorConfig):
        super().__init__()
        b = cfg.base_channels
        self.stem = ConvBlock(cfg.in_channels, b, 3, 2)  # /2
        self.stage2 = nn.Sequential(ConvBlock(b, 2 * b, 3, 2), CSPBlock(2 * b, 2 * b, cfg.depth))  # /4
        self.stage3 = nn.Sequential(ConvBlock(2 * b, 4 * b, 3, 2), CSPBlock(4 * b, 4 * b, cfg.depth))  # /8
        self.stage4 = nn.Sequential(ConvBlock(4 * b, 8 * b, 3, 2), CSPBlock(8 * b, 8 * b, cfg.depth))  # /16
        self.stage5 = nn.Sequential(ConvBlock(8 * b, 16 * b, 3, 2), CSPBlock(16 * b, 16 * b, cfg.depth))  # /32
        self.out_channels = (4 * b, 8 * b, 16 * b)

    def forward(self, x):
        x = self.stage2(self.stem(x))
        p3 = self.stage3(x)
        p4 = self.stage4(p3)
        p5 = self.stage5(p4)
        return p3, p4, p5


class PANNeck(nn.Module):
    """Top-down then bottom-up fusion across the three pyramid levels."""

    def __init__(self, channels):
        super().__init__()
        c3, c4, c5 = channels
        self.up = nn.Upsample(scale_factor=2, mode="nearest")
        self.td4 = CSPBlock(c5 + c4, c4, 1, shortcut=False)
        self.td3 = CSPBlock(c4 + c3, c3, 1, shortcut=False)
        self.down3 = ConvBlock(c3, c3, 3, 2)
        self.bu4 = CSPBlock(c3 + c4, c4, 1, shortcut=False)
        self.down4 = ConvBlock(c4, c4, 3, 2)
        self.bu5 = CSPBlock(c4 + c5, c5, 1, shortcut=False)
        self.out_channels = (c3, c4, c5)

    def forward(self, feats):
        p3, p4, p5 = feats
        t4 = self.td4(torch.cat([self.up(p5), p4], dim=1))
        t3 = self.td3(torch.cat([self.up(t4), p3], dim=1))
        n4 = self.bu4(torch.cat([self.down3(t3), t4], dim=1))
        n5 = self.bu5(torch.cat([self.down4(n4), p5], dim=1))
        return t3, n4, n5


class Head(nn.Module):
    """Per-level conv stack -> (4 + 1 + C) raw values per cell."""

    def __init__(self, channels, num_classes, obj_prior):
        super().__init__()
        self.num_classes = num_classes
        out = 4 + 1 + num_classes
        self.stacks = nn.ModuleList(ConvBlock(c, c, 3) for c in channels)
        self.preds = nn.ModuleList(nn.Conv2d(c, out, 1) for c in channels)
        for conv in self.preds:
            nn.init.zeros_(conv.weight)
            nn.init.zeros_(conv.bias)
            with torch.no_grad():
                conv.bias[4] = math.log(obj_prior / (1.0 - obj_prior))

    def forward(self, feats):
        return [pred(stack(f)) for f, stack, pred in zip(feats, self.stacks, self.preds)]


class Detector(nn.Module):
    def __init__(self, cfg: DetectorConfig = DetectorConfig()):
        super().__init__()
        self.cfg = cfg
        self.backbone = Backbone(cfg)
        self.neck = PANNeck(self.backbone.out_channels)
        self.head = Head(self.neck.out_channels, cfg.num_classes, cfg.obj_prior)

    @property
    def max_stride(self) -> int:
        return max(self.cfg.strides)

    def forward(self, x):
        """(B, C, H, W) -> list of per-level raw maps (B, 5+C, H_l, W_l)."""
        return self.head(self.neck(self.backbone(x)))
