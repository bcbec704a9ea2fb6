"""Real-ESRGAN-style super-resolution: residual generator with upsampling,
adversarial + reconstruction training, synthetic degradation for pairs."""

from .degrade import DegradationConfig, area_downsample, degrade
from .model import SRConfig, SRGenerator
from .train import (
    SRTrainConfig,
    TrainingDiverged,
    bicubic_upscale,
    sr_forward,
    sr_gan_loss,
    sr_rec_loss,
    train_sr,
    upscale_image,
)

__all__ = [
    "DegradationConfig",
    "SRConfig",
    "SRGenerator",
    "SRTrainConfig",
    "TrainingDiverged",
    "area_downsample",
    "bicubic_upscale",
    "degrade",
    "sr_forward",
    "sr_gan_loss",
    "sr_rec_loss",
    "train_sr",
    "upscale_image",
]
