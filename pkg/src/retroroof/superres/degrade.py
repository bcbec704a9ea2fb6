"""Synthetic degradation for manufacturing LR/HR training pairs:
Gaussian blur -> exact area downsample -> additive Gaussian noise,
fully seeded."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..imagery import Raster

VALUE_RANGES = {"L": (0.0, 100.0), "RGB": (0.0, 1.0), "LAB": None}


@dataclass(frozen=True)
class DegradationConfig:
    scale: int = 4
    blur_sigma: tuple = (0.4, 1.2)
    noise_sigma: tuple = (0.0, 0.03)  # in units of the RGB [0,1] range
    seed: int = 0

    def __post_init__(self):
        if min(self.blur_sigma) < 0 or min(self.noise_sigma) < 0:
            raise ValueError("sigma ranges must be non-negative")


def area_downsample(arr: np.ndarray, s: int) -> np.ndarray:
    """Exact s x s block averaging; dims must be divisible by s."""
    h, w, c = arr.shape
    if h % s or w % s:
        raise ValueError(f"dims {w}x{h} not divisible by scale {s}")
    return arr.reshape(h // s, s, w // s, s, c).mean(axis=(1, 3))


def degrade(i_hr: Raster, cfg: DegradationConfig) -> Raster:
    """Blur, downsample by 1/s, add noise, clip to the channel value range.

    Deterministic for a fixed config seed; zero blur ranges skip the blur
    entirely so constant images stay constant."""
    rng = np.random.default_rng(cfg.seed)
    arr = i_hr.samples
    lo_hi = VALUE_RANGES[i_hr.channels]
    sigma = float(rng.uniform(*cfg.blur_sigma))
    if sigma > 0:
        arr = ndimage.gaussian_filter(arr, sigma=(sigma, sigma, 0), mode="reflect")
    arr = area_downsample(arr, cfg.scale)
    noise = float(rng.uniform(*cfg.noise_sigma))
    if noise > 0:
        span = (lo_hi[1] - lo_hi[0]) if lo_hi else 1.0
        arr = arr + rng.normal(0.0, noise * span, size=arr.shape)
    if lo_hi is not None:
        arr = np.clip(arr, lo_hi[0], lo_hi[1])
    return Raster(i_hr.channels, arr)
