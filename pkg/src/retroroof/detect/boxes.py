"""Box containers shared across the detector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BoxPrediction:
    """One dense prediction slot: center-form box, objectness, class probs."""

    cx: float
    cy: float
    w: float
    h: float
    objectness: float
    class_probs: tuple

    def __post_init__(self):
        object.__setattr__(self, "class_probs", tuple(float(p) for p in self.class_probs))

    @property
    def score(self) -> float:
        return self.objectness * max(self.class_probs)

    def corner_box(self) -> tuple[float, float, float, float]:
        return self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h


def center_form(box) -> tuple[float, float, float, float]:
    """Accept a GroundTruthBox, a BoxPrediction, or a (cx, cy, w, h) sequence
    and return (cx, cy, w, h)."""
    if isinstance(box, BoxPrediction):
        return box.cx, box.cy, box.w, box.h
    if hasattr(box, "x") and hasattr(box, "w"):  # corner-form GroundTruthBox
        return box.x + box.w / 2.0, box.y + box.h / 2.0, box.w, box.h
    cx, cy, w, h = (float(v) for v in box)
    return cx, cy, w, h


def corner_to_center(boxes: np.ndarray) -> np.ndarray:
    """(N,4) [x, y, w, h] -> (N,4) [cx, cy, w, h]."""
    out = np.array(boxes, dtype=np.float64, copy=True)
    out[:, 0] += out[:, 2] / 2.0
    out[:, 1] += out[:, 3] / 2.0
    return out


def center_to_corner(boxes: np.ndarray) -> np.ndarray:
    out = np.array(boxes, dtype=np.float64, copy=True)
    out[:, 0] -= out[:, 2] / 2.0
    out[:, 1] -= out[:, 3] / 2.0
    return out
