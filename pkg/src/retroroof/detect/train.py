"""Detector training: Adam with the standard configuration (lr 1e-3,
batch 16, up to 100 epochs with early stopping on validation mAP@50),
photometric + geometric augmentation, and per-epoch metric history."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn.functional as F

from .. import evaluate
from ..annotations import CocoDataset, GroundTruthBox
from ..imagery import Raster
from .inference import decode, predict
from .losses import LossWeights, box_loss, classification_loss, objectness_loss, total_loss
from .model import Detector, DetectorConfig
from .targets import HeadGeometry, assign_targets


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class AugmentConfig:
    hflip: bool = True
    vflip: bool = True
    rot90: bool = True
    scale_range: tuple = (0.9, 1.1)
    brightness: float = 0.15
    contrast: float = 0.15

    @classmethod
    def none(cls) -> "AugmentConfig":
        return cls(hflip=False, vflip=False, rot90=False, scale_range=None, brightness=0.0, contrast=0.0)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    lr: float = 1e-3
    patience: int = 10
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    model: DetectorConfig = field(default_factory=DetectorConfig)
    eval_conf: float = 0.05
    eval_iou: float = 0.5


@dataclass
class DetectionSample:
    """One training image: (H, W, 3) float32 in [0,1] + center-form boxes."""

    image: np.ndarray
    boxes: np.ndarray  # (M, 4) cx, cy, w, h in pixels
    classes: np.ndarray  # (M,) zero-based class indices
    image_id: int = 0


def samples_from_coco(dataset: CocoDataset, images: dict[int, Raster]) -> list[DetectionSample]:
    """Pair COCO annotations with rasters keyed by image id; grayscale
    rasters are replicated to three channels."""
    by_image: dict[int, list] = {img.id: [] for img in dataset.images}
    for ann in dataset.annotations:
        by_image[ann.image_id].append(ann)
    out = []
    for img in dataset.images:
        r = images[img.id]
        arr = r.samples
        if r.channels == "L":
            arr = np.repeat(arr / 100.0, 3, axis=2)
        elif r.channels != "RGB":
            raise ValueError("detector training consumes RGB or L rasters")
        anns = by_image[img.id]
        boxes = np.array(
            [[a.bbox[0] + a.bbox[2] / 2, a.bbox[1] + a.bbox[3] / 2, a.bbox[2], a.bbox[3]] for a in anns],
            dtype=np.float32,
        ).reshape(-1, 4)
        classes = np.array([a.category_id - 1 for a in anns], dtype=np.int64)
        out.append(DetectionSample(arr.astype(np.float32), boxes, classes, image_id=img.id))
    return out


# --------------------------------------------------------------------------
# Augmentation (operates on numpy image + center-form boxes)
# --------------------------------------------------------------------------


def _rot90_once(img, boxes):
    h, w = img.shape[:2]
    img = np.rot90(img).copy()
    if len(boxes):
        boxes = boxes.copy()
        cx = boxes[:, 0].copy()
        boxes[:, 0] = boxes[:, 1]
        boxes[:, 1] = w - cx
        boxes[:, [2, 3]] = boxes[:, [3, 2]]
    return img, boxes


def _scale_jitter(img, boxes, classes, factor, rng):
    h, w = img.shape[:2]
    nh, nw = max(8, round(h * factor)), max(8, round(w * factor))
    t = torch.from_numpy(img.transpose(2, 0, 1)).unsqueeze(0)
    scaled = F.interpolate(t, size=(nh, nw), mode="bilinear", align_corners=False)
    scaled = scaled[0].numpy().transpose(1, 2, 0)
    fy, fx = nh / h, nw / w
    if len(boxes):
        boxes = boxes * np.array([fx, fy, fx, fy], dtype=np.float32)
    canvas = np.zeros_like(img)
    if nh >= h:  # crop
        oy = int(rng.integers(0, nh - h + 1))
        ox = int(rng.integers(0, nw - w + 1))
        canvas = scaled[oy : oy + h, ox : ox + w].copy()
        shift = np.array([-ox, -oy, 0, 0], dtype=np.float32)
    else:  # pad
        oy = int(rng.integers(0, h - nh + 1))
        ox = int(rng.integers(0, w - nw + 1))
        canvas[oy : oy + nh, ox : ox + nw] = scaled
        shift = np.array([ox, oy, 0, 0], dtype=np.float32)
    kept_boxes, kept_classes = [], []
    for b, c in zip(boxes, classes):
        b = b + shift
        if not (0 <= b[0] < w and 0 <= b[1] < h):
            continue
        x1, y1 = max(b[0] - b[2] / 2, 0), max(b[1] - b[3] / 2, 0)
        x2, y2 = min(b[0] + b[2] / 2, w), min(b[1] + b[3] / 2, h)
        if x2 - x1 < 2 or y2 - y1 < 2:
            continue
        kept_boxes.append([(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1])
        kept_classes.append(c)
    boxes = np.array(kept_boxes, dtype=np.float32).reshape(-1, 4)
    classes = np.array(kept_classes, dtype=np.int64)
    return canvas, boxes, classes


def augment_sample(sample: DetectionSample, cfg: AugmentConfig, rng: np.random.Generator) -> DetectionSample:
    img, boxes, classes = sample.image, sample.boxes.copy(), sample.classes.copy()
    h, w = img.shape[:2]
    if cfg.hflip and rng.random() < 0.5:
        img = img[:, ::-1].copy()
        if len(boxes):
            boxes[:, 0] = w - boxes[:, 0]
    if cfg.vflip and rng.random() < 0.5:
        img = img[::-1].copy()
        if len(boxes):
            boxes[:, 1] = h - boxes[:, 1]
    if cfg.rot90 and h == w:
        for _ in range(int(rng.integers(0, 4))):
            img, boxes = _rot90_once(img, boxes)
    if cfg.scale_range is not None:
        lo, hi = cfg.scale_range
        factor = float(rng.uniform(lo, hi))
        if abs(factor - 1.0) > 1e-3:
            img, boxes, classes = _scale_jitter(img, boxes, classes, factor, rng)
    if cfg.brightness > 0:
        img = img + float(rng.uniform(-cfg.brightness, cfg.brightness))
    if cfg.contrast > 0:
        c = 1.0 + float(rng.uniform(-cfg.contrast, cfg.contrast))
        img = (img - img.mean()) * c + img.mean()
    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    return DetectionSample(img, boxes, classes, sample.image_id)


# --------------------------------------------------------------------------
# Training loop
# --------------------------------------------------------------------------


def _sample_targets(s: DetectionSample, geom: HeadGeometry):
    gts = [
        GroundTruthBox(x=b[0] - b[2] / 2, y=b[1] - b[3] / 2, w=b[2], h=b[3], category_id=int(c) + 1)
        for b, c in zip(s.boxes, s.classes)
    ]
    return assign_targets(gts, geom)


def _batch_loss(model, batch, geom, weights):
    imgs = torch.from_numpy(np.stack([s.image.transpose(2, 0, 1) for s in batch]))
    dense = decode(model(imgs), geom)
    assigns = [_sample_targets(s, geom) for s in batch]
    l_box = torch.stack([box_loss(a, dense.boxes[i]) for i, a in enumerate(assigns)]).mean()
    l_obj = torch.stack([objectness_loss(a, dense.objectness[i]) for i, a in enumerate(assigns)]).mean()
    l_cls = torch.stack([classification_loss(a, dense.class_probs[i]) for i, a in enumerate(assigns)]).mean()
    return total_loss(weights, l_box, l_obj, l_cls), l_box, l_obj, l_cls


def _val_map50(model, samples, cfg) -> float:
    preds, gts = [], {}
    for s in samples:
        r = Raster("RGB", s.image.astype(np.float64))
        for d in predict(r, model, conf_thresh=cfg.eval_conf, iou_thresh=cfg.eval_iou):
            preds.append(evaluate.Detection(s.image_id, (d.x, d.y, d.w, d.h), d.score))
        gts[s.image_id] = [[b[0] - b[2] / 2, b[1] - b[3] / 2, b[2], b[3]] for b in s.boxes]
    v = evaluate.map_at(preds, gts, (0.5,))
    return 0.0 if v is None else v


def train_detector(
    train: list[DetectionSample],
    val: list[DetectionSample],
    cfg: TrainConfig = TrainConfig(),
) -> tuple[Detector, list[dict]]:
    """Returns the best-validation model plus per-epoch history entries
    {epoch, loss, box, obj, cls, val_map50}."""
    if not train:
        raise ValueError("training set is empty")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    model = Detector(cfg.model)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    h, w = train[0].image.shape[:2]
    geom = HeadGeometry.for_image(w, h, cfg.model.strides)

    history: list[dict] = []
    best_map, best_epoch, best_state = -1.0, -1, None
    for epoch in range(cfg.epochs):
        model.train()
        order = rng.permutation(len(train))
        sums = np.zeros(4)
        n_batches = 0
        for start in range(0, len(order), cfg.batch_size):
            batch = [augment_sample(train[i], cfg.augment, rng) for i in order[start : start + cfg.batch_size]]
            loss, l_box, l_obj, l_cls = _batch_loss(model, batch, geom, cfg.weights)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}: {loss}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            sums += [loss.item(), l_box.item(), l_obj.item(), l_cls.item()]
            n_batches += 1
        model.eval()
        val_map = _val_map50(model, val, cfg) if val else 0.0
        entry = dict(
            epoch=epoch,
            loss=float(sums[0] / n_batches),
            box=float(sums[1] / n_batches),
            obj=float(sums[2] / n_batches),
            cls=float(sums[3] / n_batches),
            val_map50=float(val_map),
        )
        history.append(entry)
        if val_map > best_map:
            best_map, best_epoch = val_map, epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        elif epoch - best_epoch >= cfg.patience:
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return model, history
