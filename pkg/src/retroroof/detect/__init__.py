"""Single-stage rooftop detector: model, losses, target assignment,
inference, and training."""

from .boxes import BoxPrediction, center_form, center_to_corner, corner_to_center
from .inference import (
    DensePredictions,
    ScoredBox,
    decode,
    detector_forward,
    forward_image,
    nms,
    predict,
)
from .losses import (
    TABLE1_WEIGHTS,
    LossWeights,
    box_loss,
    ciou,
    ciou_loss,
    classification_loss,
    objectness_loss,
    total_loss,
)
from .model import Detector, DetectorConfig
from .targets import HeadGeometry, LevelGeometry, TargetAssignment, assign_targets
from .train import (
    AugmentConfig,
    DetectionSample,
    TrainConfig,
    TrainingDiverged,
    augment_sample,
    samples_from_coco,
    train_detector,
)

__all__ = [
    "AugmentConfig",
    "BoxPrediction",
    "DensePredictions",
    "DetectionSample",
    "Detector",
    "DetectorConfig",
    "HeadGeometry",
    "LevelGeometry",
    "LossWeights",
    "ScoredBox",
    "TABLE1_WEIGHTS",
    "TargetAssignment",
    "TrainConfig",
    "TrainingDiverged",
    "assign_targets",
    "augment_sample",
    "box_loss",
    "center_form",
    "center_to_corner",
    "ciou",
    "ciou_loss",
    "classification_loss",
    "corner_to_center",
    "decode",
    "detector_forward",
    "forward_image",
    "nms",
    "objectness_loss",
    "predict",
    "samples_from_coco",
    "total_loss",
    "train_detector",
]
