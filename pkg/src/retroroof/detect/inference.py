"""Decoding raw head maps into boxes, non-maximum suppression, and the
prediction entry points."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from ..imagery import Raster
from .boxes import BoxPrediction
from .model import Detector
from .targets import HeadGeometry


@dataclass
class DensePredictions:
    """Decoded dense outputs, slot order matching HeadGeometry."""

    boxes: torch.Tensor  # (..., N, 4) center-form pixels
    objectness: torch.Tensor  # (..., N)
    class_probs: torch.Tensor  # (..., N, C)
    geometry: HeadGeometry


def decode(raw_maps, geom: HeadGeometry) -> DensePredictions:
    """Raw per-level maps -> absolute-pixel center-form boxes.

    Box channels are left/top/right/bottom distances from the cell center,
    softplus-scaled by the stride so widths and heights stay positive.
    """
    flat = []
    for raw, lv in zip(raw_maps, geom.levels):
        b, c, h, w = raw.shape
        if (h, w) != (lv.grid_h, lv.grid_w):
            raise ValueError(f"head map {h}x{w} does not match geometry {lv.grid_h}x{lv.grid_w}")
        flat.append(raw.permute(0, 2, 3, 1).reshape(b, h * w, c))
    raw = torch.cat(flat, dim=1)  # (B, N, 5+C)
    if not torch.isfinite(raw).all():
        raise FloatingPointError("non-finite activations in detector head")
    anchors = geom.anchor_points().to(raw.dtype)
    strides = geom.strides_per_slot().to(raw.dtype)
    ltrb = F.softplus(raw[..., :4]) * strides.unsqueeze(-1)
    x1 = anchors[:, 0] - ltrb[..., 0]
    y1 = anchors[:, 1] - ltrb[..., 1]
    x2 = anchors[:, 0] + ltrb[..., 2]
    y2 = anchors[:, 1] + ltrb[..., 3]
    boxes = torch.stack([(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1], dim=-1)
    objectness = torch.sigmoid(raw[..., 4])
    class_probs = torch.softmax(raw[..., 5:], dim=-1)
    return DensePredictions(boxes=boxes, objectness=objectness, class_probs=class_probs, geometry=geom)


def _raster_to_tensor(img: Raster) -> torch.Tensor:
    """L or RGB raster -> (1, 3, H, W) float tensor in [0, 1]; grayscale is
    replicated across channels so RGB-trained detectors accept it."""
    arr = img.samples
    if img.channels == "L":
        arr = np.repeat(arr / 100.0, 3, axis=2)
    elif img.channels != "RGB":
        raise ValueError("detector consumes RGB or L rasters")
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1))).float().unsqueeze(0)


def forward_image(model: Detector, x: torch.Tensor):
    """Run the detector on a (1, 3, H, W) tensor, padding to the stride
    multiple and cropping dense outputs back to the original extent."""
    _, _, h, w = x.shape
    s = model.max_stride
    pad_r = (-w) % s
    pad_b = (-h) % s
    if pad_r or pad_b:
        x = F.pad(x, (0, pad_r, 0, pad_b), mode="replicate")
    raw = model(x)
    geom = HeadGeometry.for_image(x.shape[3], x.shape[2], model.cfg.strides)
    return decode(raw, geom), (w, h)


def detector_forward(img: Raster, model: Detector) -> list[BoxPrediction]:
    """Dense predictions for one image as BoxPrediction slots (deterministic)."""
    model.eval()
    with torch.no_grad():
        dense, (w, h) = forward_image(model, _raster_to_tensor(img))
    boxes = dense.boxes[0].numpy()
    obj = dense.objectness[0].numpy()
    probs = dense.class_probs[0].numpy()
    anchors = dense.geometry.anchor_points().numpy()
    keep = (anchors[:, 0] < w) & (anchors[:, 1] < h)  # drop slots in padding
    return [
        BoxPrediction(
            float(boxes[i, 0]),
            float(boxes[i, 1]),
            float(boxes[i, 2]),
            float(boxes[i, 3]),
            objectness=float(obj[i]),
            class_probs=tuple(probs[i]),
        )
        for i in np.flatnonzero(keep)
    ]


def nms(preds, iou_thresh: float, conf_thresh: float) -> list[BoxPrediction]:
    """Greedy non-maximum suppression on score = objectness * max class prob.

    Ties in score keep input order; survivors' pairwise IoU <= iou_thresh.
    """
    if not 0 <= iou_thresh <= 1 or not 0 <= conf_thresh <= 1:
        raise ValueError("thresholds must lie in [0, 1]")
    cand = [p for p in preds if p.objectness * max(p.class_probs) >= conf_thresh]
    if not cand:
        return []
    scores = np.array([p.score for p in cand])
    order = np.argsort(-scores, kind="stable")
    boxes = np.array([[p.cx - p.w / 2, p.cy - p.h / 2, p.cx + p.w / 2, p.cy + p.h / 2] for p in cand])
    areas = np.array([p.w * p.h for p in cand])
    keep = []
    while order.size:
        i = order[0]
        keep.append(i)
        if order.size == 1:
            break
        rest = order[1:]
        ix = np.minimum(boxes[i, 2], boxes[rest, 2]) - np.maximum(boxes[i, 0], boxes[rest, 0])
        iy = np.minimum(boxes[i, 3], boxes[rest, 3]) - np.maximum(boxes[i, 1], boxes[rest, 1])
        inter = np.clip(ix, 0, None) * np.clip(iy, 0, None)
        iou = inter / (areas[i] + areas[rest] - inter)
        order = rest[iou <= iou_thresh]
    return [cand[i] for i in keep]


@dataclass(frozen=True)
class ScoredBox:
    """Final detection in original-image pixels, corner-form COCO layout."""

    x: float
    y: float
    w: float
    h: float
    score: float


def predict(
    img: Raster,
    model: Detector,
    conf_thresh: float = 0.25,
    iou_thresh: float = 0.5,
) -> list[ScoredBox]:
    """Forward + decode + NMS; boxes clipped to the image bounds."""
    survivors = nms(detector_forward(img, model), iou_thresh, conf_thresh)
    out = []
    for p in survivors:
        x1 = max(p.cx - p.w / 2, 0.0)
        y1 = max(p.cy - p.h / 2, 0.0)
        x2 = min(p.cx + p.w / 2, float(img.width))
        y2 = min(p.cy + p.h / 2, float(img.height))
        if x2 - x1 <= 0 or y2 - y1 <= 0:
            continue
        out.append(ScoredBox(x=x1, y=y1, w=x2 - x1, h=y2 - y1, score=p.score))
    return out
