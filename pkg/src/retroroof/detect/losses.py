"""Composite detection loss: CIoU localization, objectness BCE, and
classification cross-entropy, combined with configurable weights.

The tensor paths are differentiable end to end (alpha in CIoU stays in the
graph so autograd gradients agree with finite differences of the value).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .boxes import center_form

PROB_EPS = 1e-7
CIOU_EPS = 1e-9


@dataclass(frozen=True)
class LossWeights:
    box: float = 7.5
    obj: float = 1.0
    cls: float = 0.5

    def __post_init__(self):
        if self.box < 0 or self.obj < 0 or self.cls < 0:
            raise ValueError("loss weights must be non-negative")


# preset matching the flat L = L_cls + L_box + L_obj configuration
TABLE1_WEIGHTS = LossWeights(box=1.0, obj=1.0, cls=1.0)


def ciou(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Complete-IoU loss between center-form (cx, cy, w, h) boxes.

    1 - IoU + rho^2/c^2 + alpha*v with c the enclosing-box diagonal,
    v the arctan aspect-ratio penalty, alpha = v / ((1 - IoU) + v + eps).
    Broadcasts over leading dims; boxes must have positive w and h.
    """
    px, py, pw, ph = pred.unbind(-1)
    gx, gy, gw, gh = target.unbind(-1)
    px1, px2 = px - pw / 2, px + pw / 2
    py1, py2 = py - ph / 2, py + ph / 2
    gx1, gx2 = gx - gw / 2, gx + gw / 2
    gy1, gy2 = gy - gh / 2, gy + gh / 2

    iw = (torch.minimum(px2, gx2) - torch.maximum(px1, gx1)).clamp(min=0)
    ih = (torch.minimum(py2, gy2) - torch.maximum(py1, gy1)).clamp(min=0)
    inter = iw * ih
    union = pw * ph + gw * gh - inter
    iou = inter / union

    cw = torch.maximum(px2, gx2) - torch.minimum(px1, gx1)
    ch = torch.maximum(py2, gy2) - torch.minimum(py1, gy1)
    c2 = cw * cw + ch * ch
    rho2 = (px - gx) ** 2 + (py - gy) ** 2

    v = (4.0 / math.pi**2) * (torch.atan(gw / gh) - torch.atan(pw / ph)) ** 2
    alpha = v / ((1.0 - iou) + v + CIOU_EPS)
    return 1.0 - iou + rho2 / c2 + alpha * v


def ciou_loss(gt, pred) -> float:
    """Scalar CIoU loss between two boxes (center-form sequences,
    GroundTruthBox, or BoxPrediction)."""
    g = center_form(gt)
    p = center_form(pred)
    if g[2] <= 0 or g[3] <= 0 or p[2] <= 0 or p[3] <= 0:
        raise ValueError("boxes must have positive width and height")
    return float(ciou(torch.tensor(p, dtype=torch.float64), torch.tensor(g, dtype=torch.float64)))


def box_loss(assign, pred_boxes: torch.Tensor) -> torch.Tensor:
    """Mean CIoU over positive slots; 0 when the image has no objects."""
    mask = assign.indicators.bool()
    n_pos = int(mask.sum())
    if n_pos == 0:
        return pred_boxes.sum() * 0.0
    target = assign.boxes.to(pred_boxes.dtype)
    return ciou(pred_boxes[mask], target[mask]).sum() / n_pos


def objectness_loss(assign, pred_obj: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy over all N slots (mean form)."""
    c = pred_obj.clamp(PROB_EPS, 1.0 - PROB_EPS)
    ind = assign.indicators.to(c.dtype)
    return -(ind * torch.log(c) + (1.0 - ind) * torch.log(1.0 - c)).mean()


def classification_loss(assign, pred_probs: torch.Tensor) -> torch.Tensor:
    """Categorical cross-entropy over positive slots, positive-normalized."""
    mask = assign.indicators.bool()
    n_pos = int(mask.sum())
    if n_pos == 0:
        return pred_probs.sum() * 0.0
    probs = pred_probs[mask].clamp(PROB_EPS, 1.0 - PROB_EPS)
    true = assign.classes[mask].long()
    picked = probs.gather(-1, true.unsqueeze(-1)).squeeze(-1)
    return -torch.log(picked).sum() / n_pos


def total_loss(weights: LossWeights, l_box, l_obj, l_cls):
    """Weighted combination of the three components."""
    return weights.box * l_box + weights.obj * l_obj + weights.cls * l_cls
