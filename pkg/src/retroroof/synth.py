"""Synthetic aerial-scene rendering: rectangular rooftops over textured
ground, with exact box annotations.

Used by the self-test benchmarks and the demo pipeline; scenes are fully
seeded so every run is reproducible. The "hard" palette gives rooftops
nearly the same luminance as the ground (they separate by hue, not
brightness), which is what makes grayscale variants genuinely harder than
colorized ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .annotations import CocoAnnotation, CocoCategory, CocoDataset, CocoImage, GroundTruthBox
from .imagery import Raster

GROUND_RGB = (0.33, 0.41, 0.30)
ROOF_RGB_EASY = (0.62, 0.40, 0.33)
ROOF_RGB_HARD = (0.52, 0.345, 0.30)  # luminance-matched to the ground
ROAD_RGB = (0.44, 0.44, 0.42)


@dataclass(frozen=True)
class SceneConfig:
    size: int = 96
    n_boxes: tuple = (1, 3)
    box_size: tuple = (18, 40)
    aspect: tuple = (0.6, 1.7)
    roof_rgb: tuple = ROOF_RGB_EASY
    roads: bool = True
    texture: float = 0.02


def _smooth_noise(rng: np.random.Generator, size: int, cells: int, amp: float) -> np.ndarray:
    coarse = rng.uniform(-amp, amp, size=(cells, cells)).astype(np.float32)
    t = torch.from_numpy(coarse)[None, None]
    fine = F.interpolate(t, size=(size, size), mode="bilinear", align_corners=False)
    return fine[0, 0].numpy().astype(np.float64)


def render_scene(rng: np.random.Generator, cfg: SceneConfig = SceneConfig()):
    """One scene -> (RGB raster, list[GroundTruthBox])."""
    s = cfg.size
    img = np.empty((s, s, 3))
    shared = _smooth_noise(rng, s, max(3, s // 16), 0.05)
    for c in range(3):
        img[..., c] = GROUND_RGB[c] + shared + _smooth_noise(rng, s, max(3, s // 8), 0.02)
    if cfg.roads and rng.random() < 0.7:
        for _ in range(int(rng.integers(1, 3))):
            width = int(rng.integers(3, 7))
            pos = int(rng.integers(0, s - width))
            shade = rng.uniform(-0.04, 0.04)
            col = np.array(ROAD_RGB) + shade
            if rng.random() < 0.5:
                img[pos : pos + width, :, :] = col
            else:
                img[:, pos : pos + width, :] = col

    boxes: list[GroundTruthBox] = []
    n = int(rng.integers(cfg.n_boxes[0], cfg.n_boxes[1] + 1))
    for _ in range(n):
        for _attempt in range(40):
            area_side = rng.uniform(*cfg.box_size)
            aspect = rng.uniform(*cfg.aspect)
            w = int(np.clip(round(area_side * np.sqrt(aspect)), 8, s - 4))
            h = int(np.clip(round(area_side / np.sqrt(aspect)), 8, s - 4))
            x = int(rng.integers(2, s - w - 1))
            y = int(rng.integers(2, s - h - 1))
            clear = all(
                x + w + 2 <= b.x or b.x + b.w + 2 <= x or y + h + 2 <= b.y or b.y + b.h + 2 <= y
                for b in boxes
            )
            if clear:
                break
        else:
            continue
        jitter = rng.uniform(-0.03, 0.03, size=3)
        roof = np.array(cfg.roof_rgb) + jitter
        patch = np.tile(roof, (h, w, 1))
        ramp = np.linspace(-0.02, 0.02, w)[None, :, None]
        patch = patch + ramp + rng.normal(0.0, cfg.texture / 2, size=(h, w, 1))
        patch[0, :], patch[-1, :] = patch[0, :] * 0.85, patch[-1, :] * 0.85
        patch[:, 0], patch[:, -1] = patch[:, 0] * 0.85, patch[:, -1] * 0.85
        img[y : y + h, x : x + w] = patch
        boxes.append(GroundTruthBox(x=float(x), y=float(y), w=float(w), h=float(h)))

    img += rng.normal(0.0, cfg.texture, size=img.shape)
    return Raster("RGB", np.clip(img, 0.0, 1.0)), boxes


def render_scenes(n: int, seed: int, cfg: SceneConfig = SceneConfig()):
    rng = np.random.default_rng(seed)
    return [render_scene(rng, cfg) for _ in range(n)]


def scenes_to_coco(scenes, file_prefix: str = "tile") -> tuple[CocoDataset, dict[int, Raster]]:
    """Pack rendered scenes into a COCO dataset + id->raster mapping."""
    images, annotations, rasters = [], [], {}
    ann_id = 1
    for i, (raster, boxes) in enumerate(scenes, start=1):
        images.append(CocoImage(id=i, width=raster.width, height=raster.height, file_name=f"{file_prefix}_{i:04d}.png"))
        rasters[i] = raster
        for b in boxes:
            annotations.append(
                CocoAnnotation(
                    id=ann_id,
                    image_id=i,
                    category_id=b.category_id,
                    bbox=(b.x, b.y, b.w, b.h),
                    area=b.w * b.h,
                )
            )
            ann_id += 1
    ds = CocoDataset(images=images, annotations=annotations, categories=[CocoCategory(1, "rooftop")])
    ds.validate()
    return ds, rasters
