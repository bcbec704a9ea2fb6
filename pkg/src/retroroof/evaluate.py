"""Detection metrics: IoU, greedy matching, COCO-style AP, and the
four-variant comparison harness.

Boxes everywhere in this module are [x, y, w, h] with (x, y) the top-left
corner, matching COCO bbox order. Predictions additionally carry an image id
and a confidence score.

Conventions for degenerate cases (the evaluation protocol leaves them open):
  * average precision with zero ground-truth boxes overall is undefined and
    reported as None ("skip"), never 0
  * precision with TP+FP == 0 is 1.0 if there were no misses, else 0.0
  * recall with no ground truth at all is 1.0 if nothing was predicted,
    else 0.0
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

MAP5095_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
RECALL_SAMPLES = np.array([i / 100.0 for i in range(101)])


@dataclass(frozen=True)
class Detection:
    """One predicted box on one image."""

    image_id: int
    box: tuple  # (x, y, w, h)
    score: float


@dataclass
class MatchResult:
    """Greedy matching of one image's predictions against its ground truth."""

    pred_is_tp: list
    pred_matched_gt: list  # gt index or None, aligned with score-sorted preds
    pred_ious: list
    pred_order: list  # indices into the caller's prediction list, score-sorted
    gt_matched: list


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    """Intersection-over-union of two [x, y, w, h] boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise ValueError("boxes must have positive width and height")
    ix = min(ax + aw, bx + bw) - max(ax, bx)
    iy = min(ay + ah, by + bh) - max(ay, by)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (aw * ah + bw * bh - inter)


def match(
    preds: Sequence[tuple],
    gts: Sequence[Sequence[float]],
    iou_thresh: float,
) -> MatchResult:
    """Greedy matching: walk predictions by descending score (ties keep input
    order); each takes the highest-IoU still-unmatched GT with IoU >= thresh.

    preds are (box, score) pairs.
    """
    if not 0 < iou_thresh <= 1:
        raise ValueError("iou_thresh must be in (0, 1]")
    order = sorted(range(len(preds)), key=lambda i: -preds[i][1])
    gt_matched = [False] * len(gts)
    is_tp, matched_gt, ious = [], [], []
    for i in order:
        box = preds[i][0]
        best_j, best_iou = None, 0.0
        for j, gt in enumerate(gts):
            if gt_matched[j]:
                continue
            v = iou(box, gt)
            if v >= iou_thresh and v > best_iou:
                best_j, best_iou = j, v
        if best_j is None:
            is_tp.append(False)
            matched_gt.append(None)
            ious.append(0.0)
        else:
            gt_matched[best_j] = True
            is_tp.append(True)
            matched_gt.append(best_j)
            ious.append(best_iou)
    return MatchResult(is_tp, matched_gt, ious, order, gt_matched)


def _pooled_flags(
    preds: Sequence[Detection],
    gts: Mapping[int, Sequence[Sequence[float]]],
    iou_thresh: float,
) -> tuple[np.ndarray, int]:
    """TP/FP flags for all predictions pooled across images, sorted by
    descending score (stable in input order), plus the total GT count."""
    by_image: dict[int, list[tuple[int, Detection]]] = {}
    for idx, d in enumerate(preds):
        by_image.setdefault(d.image_id, []).append((idx, d))
    flags = np.zeros(len(preds), dtype=bool)
    for image_id, items in by_image.items():
        m = match([(d.box, d.score) for _, d in items], gts.get(image_id, ()), iou_thresh)
        for pos, tp in zip(m.pred_order, m.pred_is_tp):
            flags[items[pos][0]] = tp
    order = np.argsort(-np.asarray([d.score for d in preds], dtype=np.float64), kind="stable")
    n_gt = sum(len(v) for v in gts.values())
    return flags[order], int(n_gt)


def average_precision(
    preds: Sequence[Detection],
    gts: Mapping[int, Sequence[Sequence[float]]],
    iou_thresh: float,
) -> float | None:
    """101-point interpolated AP (COCO protocol) at one IoU threshold.

    Returns None when there is no ground truth at all (undefined, skipped).
    """
    flags, n_gt = _pooled_flags(preds, gts, iou_thresh)
    if n_gt == 0:
        return None
    if len(flags) == 0:
        return 0.0
    tp_cum = np.cumsum(flags)
    fp_cum = np.cumsum(~flags)
    recall = tp_cum / n_gt
    precision = tp_cum / (tp_cum + fp_cum)
    # precision envelope, then sample at recalls 0.00..1.00 step 0.01
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_SAMPLES, side="left")
    sampled = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(sampled.mean())


def map_at(
    preds: Sequence[Detection],
    gts: Mapping[int, Sequence[Sequence[float]]],
    thresholds: Iterable[float],
) -> float | None:
    """Mean AP over IoU thresholds; mAP@50 uses (0.5,), mAP@50-95 uses
    MAP5095_THRESHOLDS."""
    thresholds = tuple(thresholds)
    if not thresholds:
        raise ValueError("need at least one IoU threshold")
    aps = [average_precision(preds, gts, t) for t in thresholds]
    if any(a is None for a in aps):
        return None
    return float(np.mean(aps))


def precision_recall_f1(
    preds: Sequence[Detection],
    gts: Mapping[int, Sequence[Sequence[float]]],
    iou_thresh: float = 0.5,
    conf_thresh: float = 0.25,
) -> tuple[float, float, float]:
    """Precision/recall/F1 at a fixed operating point (score >= conf_thresh)."""
    kept = [d for d in preds if d.score >= conf_thresh]
    flags, n_gt = _pooled_flags(kept, gts, iou_thresh)
    tp = int(flags.sum())
    fp = len(flags) - tp
    fn = n_gt - tp
    if tp + fp == 0:
        p = 1.0 if fn == 0 else 0.0
    else:
        p = tp / (tp + fp)
    if tp + fn == 0:
        r = 1.0 if tp + fp == 0 else 0.0
    else:
        r = tp / (tp + fn)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


# --------------------------------------------------------------------------
# Prediction dump files (one record per box: image id, x, y, w, h, score)
# --------------------------------------------------------------------------


def write_predictions(preds: Sequence[Detection], path) -> None:
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        for d in preds:
            x, y, w, h = d.box
            fh.write(f"{d.image_id} {x!r} {y!r} {w!r} {h!r} {d.score!r}\n")
    os.replace(tmp, path)


def read_predictions(path) -> list[Detection]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            image_id = int(parts[0])
            x, y, w, h, score = (float(p) for p in parts[1:])
            out.append(Detection(image_id, (x, y, w, h), score))
    return out


# --------------------------------------------------------------------------
# Variant comparison harness
# --------------------------------------------------------------------------

VARIANTS = ("bw", "color", "bw_upscaled", "color_upscaled")


@dataclass(frozen=True)
class VariantRun:
    """One (model, variant) evaluation: a prediction dump against a GT set."""

    model: str
    variant: str
    preds: Sequence[Detection]
    gts: Mapping[int, Sequence[Sequence[float]]]


@dataclass
class VariantReport:
    """Metrics per (model, variant): mAP@50, mAP@50-95, precision, recall, F1."""

    rows: dict = field(default_factory=dict)  # (model, variant) -> metrics dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["variant", "model", "map50", "map5095", "precision", "recall", "f1"])
        for (model, variant), m in sorted(self.rows.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            writer.writerow(
                [variant, model]
                + [f"{m[k]:.6f}" if m[k] is not None else "" for k in ("map50", "map5095", "precision", "recall", "f1")]
            )
        return buf.getvalue()

    def render_table(self, bw_variant: str = "bw_upscaled", color_variant: str = "color_upscaled") -> str:
        """Text table with the model x {mAP@50, Recall} x {B&W, Colored} layout."""
        headers = ["Model", "mAP@50 (B&W)", "Recall (B&W)", "mAP@50 (Colored)", "Recall (Colored)"]
        models = sorted({model for model, _ in self.rows})
        lines = []
        for model in models:
            bw = self.rows.get((model, bw_variant), {})
            co = self.rows.get((model, color_variant), {})

            def fmt(m, key):
                v = m.get(key)
                return f"{v:.4f}" if v is not None else "-"

            lines.append([model, fmt(bw, "map50"), fmt(bw, "recall"), fmt(co, "map50"), fmt(co, "recall")])
        widths = [max(len(h), *(len(row[i]) for row in lines)) if lines else len(h) for i, h in enumerate(headers)]
        sep = "-+-".join("-" * w for w in widths)
        out = [" | ".join(h.ljust(w) for h, w in zip(headers, widths)), sep]
        for row in lines:
            out.append(" | ".join(c.ljust(w) for c, w in zip(row, widths)))
        return "\n".join(out) + "\n"


def coco_to_gt_boxes(dataset) -> dict[int, list[list[float]]]:
    """CocoDataset -> {image_id: [[x, y, w, h], ...]} for the metric functions."""
    gts: dict[int, list[list[float]]] = {img.id: [] for img in dataset.images}
    for ann in dataset.annotations:
        gts[ann.image_id].append(list(ann.bbox))
    return gts


def compare_variants(runs: Iterable[VariantRun], conf_thresh: float = 0.25) -> VariantReport:
    """Evaluate every run; prediction sets may come from external models."""
    report = VariantReport()
    for run in runs:
        missing = {d.image_id for d in run.preds} - set(run.gts)
        if missing:
            raise ValueError(
                f"predictions for ({run.model}, {run.variant}) reference image ids "
                f"absent from the ground truth: {sorted(missing)[:5]}"
            )
        p, r, f1 = precision_recall_f1(run.preds, run.gts, 0.5, conf_thresh)
        report.rows[(run.model, run.variant)] = {
            "map50": map_at(run.preds, run.gts, (0.5,)),
            "map5095": map_at(run.preds, run.gts, MAP5095_THRESHOLDS),
            "precision": p,
            "recall": r,
            "f1": f1,
        }
    return report
