"""DeOldify-style colorization: self-attention U-Net generator predicting
chrominance, patch discriminator, adversarial + L1 training."""

from .losses import gan_loss, l1_loss, self_attention
from .model import (
    ChromaUNet,
    ColorizerConfig,
    PatchDiscriminator,
    PatchDiscriminatorConfig,
    SelfAttention2d,
)
from .train import (
    ColorizerTrainConfig,
    TrainingDiverged,
    colorize_image,
    extract_chroma,
    extract_luminance,
    generator_forward,
    merge_luminance_chroma,
    normalize_lab,
    train_colorizer,
)

__all__ = [
    "ChromaUNet",
    "ColorizerConfig",
    "ColorizerTrainConfig",
    "PatchDiscriminator",
    "PatchDiscriminatorConfig",
    "SelfAttention2d",
    "TrainingDiverged",
    "colorize_image",
    "extract_chroma",
    "extract_luminance",
    "gan_loss",
    "generator_forward",
    "l1_loss",
    "merge_luminance_chroma",
    "normalize_lab",
    "self_attention",
    "train_colorizer",
]
