"""Anchor-free target assignment: each ground-truth box claims the grid cell
containing its center, at the pyramid level whose nominal object size best
matches the box."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .boxes import center_form

# a level with stride s nominally handles objects of size ~4*s
LEVEL_SIZE_FACTOR = 4.0


@dataclass(frozen=True)
class LevelGeometry:
    stride: int
    grid_h: int
    grid_w: int

    @property
    def n_slots(self) -> int:
        return self.grid_h * self.grid_w


@dataclass(frozen=True)
class HeadGeometry:
    """Slot layout of the dense head: level-major, then row-major."""

    levels: tuple
    image_w: int
    image_h: int

    @classmethod
    def for_image(cls, image_w: int, image_h: int, strides=(8, 16, 32)) -> "HeadGeometry":
        levels = tuple(
            LevelGeometry(s, -(-image_h // s), -(-image_w // s)) for s in strides
        )
        return cls(levels=levels, image_w=image_w, image_h=image_h)

    @property
    def n_slots(self) -> int:
        return sum(lv.n_slots for lv in self.levels)

    def slot_index(self, level: int, row: int, col: int) -> int:
        base = sum(lv.n_slots for lv in self.levels[:level])
        return base + row * self.levels[level].grid_w + col

    def anchor_points(self) -> torch.Tensor:
        """(N, 2) anchor centers (x, y) in image pixels, slot order."""
        pts = []
        for lv in self.levels:
            ys = (torch.arange(lv.grid_h, dtype=torch.float32) + 0.5) * lv.stride
            xs = (torch.arange(lv.grid_w, dtype=torch.float32) + 0.5) * lv.stride
            gy, gx = torch.meshgrid(ys, xs, indexing="ij")
            pts.append(torch.stack([gx.reshape(-1), gy.reshape(-1)], dim=-1))
        return torch.cat(pts, dim=0)

    def strides_per_slot(self) -> torch.Tensor:
        return torch.cat(
            [torch.full((lv.n_slots,), float(lv.stride)) for lv in self.levels]
        )


@dataclass
class TargetAssignment:
    """Per-slot training targets: indicator, matched box, class label."""

    indicators: torch.Tensor  # (N,) float 0/1
    boxes: torch.Tensor  # (N, 4) center-form, valid where indicator == 1
    classes: torch.Tensor  # (N,) long
    n_slots: int


def _best_level(size: float, levels) -> int:
    scores = [abs(np.log2(size / (LEVEL_SIZE_FACTOR * lv.stride))) for lv in levels]
    return int(np.argmin(scores))


def assign_targets(gts, geom: HeadGeometry) -> TargetAssignment:
    """Center-cell rule. When two boxes land on the same slot the first keeps
    it; distinct-cell ground truths map to exactly one positive slot each."""
    n = geom.n_slots
    indicators = torch.zeros(n)
    boxes = torch.zeros(n, 4)
    classes = torch.zeros(n, dtype=torch.long)
    for gt in gts:
        cx, cy, w, h = center_form(gt)
        if not (0 <= cx <= geom.image_w and 0 <= cy <= geom.image_h):
            raise ValueError(f"ground-truth center ({cx}, {cy}) outside image")
        level = _best_level(float(np.sqrt(w * h)), geom.levels)
        lv = geom.levels[level]
        col = min(int(cx // lv.stride), lv.grid_w - 1)
        row = min(int(cy // lv.stride), lv.grid_h - 1)
        idx = geom.slot_index(level, row, col)
        if indicators[idx]:
            continue
        indicators[idx] = 1.0
        boxes[idx] = torch.tensor([cx, cy, w, h])
        cat = getattr(gt, "category_id", 1)
        classes[idx] = int(cat) - 1 if int(cat) >= 1 else 0
    return TargetAssignment(indicators=indicators, boxes=boxes, classes=classes, n_slots=n)
