"""Super-resolution training on synthetically degraded pairs and tile-wise
whole-image upscaling.

The generator objective is lambda_adv * (-mean log D(SR)) + lambda_rec * L1;
reconstruction-dominant weighting keeps small-scale training stable. With
lambda_adv == 0 the discriminator is skipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn.functional as F

from ..colorize.losses import PROB_EPS, gan_loss, l1_loss
from ..colorize.model import PatchDiscriminator, PatchDiscriminatorConfig
from ..imagery import Raster, make_tile_grid, stitch, tile_raster
from .degrade import DegradationConfig, degrade
from .model import SRConfig, SRGenerator


class TrainingDiverged(RuntimeError):
    pass


def sr_gan_loss(d_real, d_fake) -> torch.Tensor:
    """Adversarial objective for super-resolution; same functional form as
    the colorizer GAN loss."""
    return gan_loss(d_real, d_fake)


def sr_rec_loss(i_hr, i_sr) -> torch.Tensor:
    """Pixel-level reconstruction: mean absolute error."""
    return l1_loss(i_hr, i_sr)


@dataclass(frozen=True)
class SRTrainConfig:
    epochs: int = 5
    batch_size: int = 8
    lr: float = 2e-3
    lambda_adv: float = 0.1
    lambda_rec: float = 1.0
    val_fraction: float = 0.2
    seed: int = 0
    model: SRConfig = field(default_factory=SRConfig)
    disc: PatchDiscriminatorConfig = field(default_factory=PatchDiscriminatorConfig)


def _stack(rasters) -> torch.Tensor:
    return torch.stack(
        [torch.from_numpy(r.samples.transpose(2, 0, 1)).float() for r in rasters]
    )


def _val_rec(gen, lr_t, hr_t) -> float:
    gen.eval()
    with torch.no_grad():
        sr = gen(lr_t)
    return float((sr - hr_t).abs().mean())


def train_sr(hr_tiles, deg: DegradationConfig, cfg: SRTrainConfig = SRTrainConfig()):
    """Returns (generator, discriminator | None, history); history[0] is the
    pre-training validation entry."""
    if not hr_tiles:
        raise ValueError("no training tiles")
    if deg.scale != cfg.model.scale:
        raise ValueError("degradation scale must match the model scale")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)

    lr_tiles = [degrade(t, replace(deg, seed=deg.seed + i)) for i, t in enumerate(hr_tiles)]
    hr_t, lr_t = _stack(hr_tiles), _stack(lr_tiles)
    n_val = max(1, int(round(len(hr_tiles) * cfg.val_fraction))) if len(hr_tiles) > 1 else 0
    idx = rng.permutation(len(hr_tiles))
    val_idx, train_idx = idx[:n_val], idx[n_val:]
    if len(train_idx) == 0:
        train_idx = idx

    gen = SRGenerator(cfg.model)
    adversarial = cfg.lambda_adv > 0
    disc = PatchDiscriminator(cfg.disc) if adversarial else None
    g_opt = torch.optim.Adam(gen.parameters(), lr=cfg.lr, betas=(0.5, 0.999))
    d_opt = torch.optim.Adam(disc.parameters(), lr=cfg.lr, betas=(0.5, 0.999)) if adversarial else None

    history = [dict(epoch=-1, val_rec=_val_rec(gen, lr_t[val_idx], hr_t[val_idx]) if n_val else None)]
    for epoch in range(cfg.epochs):
        gen.train()
        if disc is not None:
            disc.train()
        order = rng.permutation(len(train_idx))
        sums, n_batches = np.zeros(4), 0
        for start in range(0, len(order), cfg.batch_size):
            sel = train_idx[order[start : start + cfg.batch_size]]
            lr_b, hr_b = lr_t[sel], hr_t[sel]
            sr_b = gen(lr_b)

            d_loss_val = 0.0
            if adversarial:
                d_loss = -sr_gan_loss(disc(hr_b), disc(sr_b.detach()))
                if not torch.isfinite(d_loss):
                    raise TrainingDiverged(f"discriminator loss non-finite at epoch {epoch}")
                d_opt.zero_grad()
                d_loss.backward()
                d_opt.step()
                d_loss_val = d_loss.item()

            rec = sr_rec_loss(hr_b, sr_b)
            if adversarial:
                adv = -torch.log(disc(sr_b).clamp(PROB_EPS, 1 - PROB_EPS)).mean()
            else:
                adv = torch.zeros(())
            g_loss = cfg.lambda_adv * adv + cfg.lambda_rec * rec
            if not torch.isfinite(g_loss):
                raise TrainingDiverged(f"generator loss non-finite at epoch {epoch}")
            g_opt.zero_grad()
            g_loss.backward()
            g_opt.step()
            sums += [g_loss.item(), adv.item(), rec.item(), d_loss_val]
            n_batches += 1
        history.append(
            dict(
                epoch=epoch,
                g_total=float(sums[0] / n_batches),
                g_adv=float(sums[1] / n_batches),
                g_rec=float(sums[2] / n_batches),
                d_loss=float(sums[3] / n_batches),
                val_rec=_val_rec(gen, lr_t[val_idx], hr_t[val_idx]) if n_val else None,
            )
        )
    gen.eval()
    return gen, disc, history


# --------------------------------------------------------------------------
# Inference
# --------------------------------------------------------------------------


def sr_forward(i_lr: Raster, gen: SRGenerator) -> Raster:
    """Single-shot super-resolution; output dims are exactly scale x input."""
    if i_lr.channels == "L":
        arr = np.repeat(i_lr.samples / 100.0, 3, axis=2)
        channels = "RGB"
    elif i_lr.channels == "RGB":
        arr, channels = i_lr.samples, "RGB"
    else:
        raise ValueError("super-resolution consumes RGB or L rasters")
    x = torch.from_numpy(arr.transpose(2, 0, 1)).float().unsqueeze(0)
    gen.eval()
    with torch.no_grad():
        y = gen(x)[0]
    if not torch.isfinite(y).all():
        raise FloatingPointError("non-finite activations in SR generator")
    out = np.clip(y.numpy().transpose(1, 2, 0).astype(np.float64), 0.0, 1.0)
    return Raster(channels, out)


def bicubic_upscale(img: Raster, scale: int) -> Raster:
    """Plain bicubic upscaling (comparison baseline)."""
    x = torch.from_numpy(img.samples.transpose(2, 0, 1)).unsqueeze(0)
    y = F.interpolate(x, scale_factor=scale, mode="bicubic", align_corners=False)[0]
    return Raster(img.channels, np.clip(y.numpy().transpose(1, 2, 0), 0.0, 1.0))


def upscale_image(img: Raster, gen: SRGenerator, tile: int = 64, overlap: int = 16) -> Raster:
    """Tile-wise super-resolution with seam-margin cropping.

    Tiles overlap in LR space; each SR tile then sheds overlap/2 border
    pixels (except at true image borders) before stitching, so tiled output
    matches single-shot output away from the image edge."""
    s = gen.cfg.scale
    if tile >= img.width and tile >= img.height:
        return sr_forward(img, gen)
    tile = min(tile, img.width, img.height)
    grid = make_tile_grid(img.width, img.height, tile, overlap)
    margin = overlap // 2
    pieces = []
    for (x, y), t in tile_raster(img, grid):
        sr = sr_forward(t, gen)
        left = margin if x > 0 else 0
        top = margin if y > 0 else 0
        right = margin if x + tile < img.width else 0
        bottom = margin if y + tile < img.height else 0
        cropped = Raster(
            sr.channels,
            sr.samples[top * s : (t.height - bottom) * s, left * s : (t.width - right) * s],
        )
        pieces.append((((x + left) * s, (y + top) * s), cropped))
    out_grid = make_tile_grid(img.width * s, img.height * s, tile * s, overlap * s)
    return stitch(pieces, out_grid)
