"""Colorizer training and whole-image inference.

Training alternates generator and discriminator steps: the generator
minimizes lambda_adv * (-mean log D(fake)) + lambda_l1 * L1 in normalized
LAB space, the discriminator maximizes the patch GAN objective. With
lambda_adv == 0 this collapses to plain chrominance regression and the
discriminator is skipped entirely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..imagery import Raster, lab_to_rgb, make_tile_grid, rgb_to_lab, tile_raster
from .losses import PROB_EPS, gan_loss, l1_loss
from .model import ChromaUNet, ColorizerConfig, PatchDiscriminator, PatchDiscriminatorConfig


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ColorizerTrainConfig:
    epochs: int = 5
    batch_size: int = 8
    lr: float = 2e-3
    lambda_adv: float = 1.0
    lambda_l1: float = 100.0
    val_fraction: float = 0.2
    seed: int = 0
    model: ColorizerConfig = field(default_factory=ColorizerConfig)
    disc: PatchDiscriminatorConfig = field(default_factory=PatchDiscriminatorConfig)


def normalize_lab(lab: torch.Tensor) -> torch.Tensor:
    """(B, 3, H, W) raw LAB -> roughly [-1, 1] per channel."""
    out = torch.empty_like(lab)
    out[:, 0] = lab[:, 0] / 50.0 - 1.0
    out[:, 1:] = lab[:, 1:] / 128.0
    return out


def _pairs_to_tensors(pairs):
    ls, labs = [], []
    for gray, color in pairs:
        if gray.channels != "L" or color.channels != "RGB":
            raise ValueError("pairs must be (L raster, RGB raster)")
        if gray.samples.shape[:2] != color.samples.shape[:2]:
            raise ValueError("gray/color pair dims differ")
        lab = rgb_to_lab(color).samples
        ls.append(torch.from_numpy(gray.samples[..., 0]).float())
        labs.append(torch.from_numpy(lab.transpose(2, 0, 1)).float())
    return torch.stack(ls).unsqueeze(1), torch.stack(labs)


def _val_l1(gen, l_norm, ab_raw) -> float:
    gen.eval()
    with torch.no_grad():
        pred = gen(l_norm)
    return float((pred - ab_raw).abs().mean())


def train_colorizer(pairs, cfg: ColorizerTrainConfig = ColorizerTrainConfig()):
    """Returns (generator, discriminator | None, history). history[0] is the
    pre-training validation entry; later entries are per-epoch means."""
    if not pairs:
        raise ValueError("no training pairs")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)

    l_raw, lab_raw = _pairs_to_tensors(pairs)
    l_norm = l_raw / 50.0 - 1.0
    lab_norm = normalize_lab(lab_raw)
    n_val = max(1, int(round(len(pairs) * cfg.val_fraction))) if len(pairs) > 1 else 0
    idx = rng.permutation(len(pairs))
    val_idx, train_idx = idx[:n_val], idx[n_val:]
    if len(train_idx) == 0:
        train_idx = idx

    gen = ChromaUNet(cfg.model)
    adversarial = cfg.lambda_adv > 0
    disc = PatchDiscriminator(cfg.disc) if adversarial else None
    g_opt = torch.optim.Adam(gen.parameters(), lr=cfg.lr, betas=(0.5, 0.999))
    d_opt = torch.optim.Adam(disc.parameters(), lr=cfg.lr, betas=(0.5, 0.999)) if adversarial else None

    history = [dict(epoch=-1, val_l1=_val_l1(gen, l_norm[val_idx], lab_raw[val_idx, 1:]) if n_val else None)]
    for epoch in range(cfg.epochs):
        gen.train()
        if disc is not None:
            disc.train()
        order = rng.permutation(len(train_idx))
        sums, n_batches = np.zeros(4), 0
        for start in range(0, len(order), cfg.batch_size):
            sel = train_idx[order[start : start + cfg.batch_size]]
            l_b, lab_b = l_norm[sel], lab_norm[sel]

            fake_ab = gen(l_b) / 128.0
            fake_lab = torch.cat([l_b, fake_ab], dim=1)

            d_loss_val = 0.0
            if adversarial:
                d_real_logit = disc.forward_logits(lab_b)
                d_fake_logit = disc.forward_logits(fake_lab.detach())
                if cfg.model.relativistic:
                    d_loss = _relativistic_loss(d_real_logit, d_fake_logit, for_generator=False)
                else:
                    d_loss = -gan_loss(torch.sigmoid(d_real_logit), torch.sigmoid(d_fake_logit))
                if not torch.isfinite(d_loss):
                    raise TrainingDiverged(f"discriminator loss non-finite at epoch {epoch}")
                d_opt.zero_grad()
                d_loss.backward()
                d_opt.step()
                d_loss_val = d_loss.item()

            l1 = l1_loss(lab_b, fake_lab)
            if adversarial:
                fake_logit = disc.forward_logits(fake_lab)
                if cfg.model.relativistic:
                    real_logit = disc.forward_logits(lab_b)
                    adv = _relativistic_loss(real_logit, fake_logit, for_generator=True)
                else:
                    adv = -torch.log(torch.sigmoid(fake_logit).clamp(PROB_EPS, 1 - PROB_EPS)).mean()
            else:
                adv = torch.zeros(())
            g_loss = cfg.lambda_adv * adv + cfg.lambda_l1 * l1
            if not torch.isfinite(g_loss):
                raise TrainingDiverged(f"generator loss non-finite at epoch {epoch}")
            g_opt.zero_grad()
            g_loss.backward()
            g_opt.step()

            sums += [g_loss.item(), adv.item(), l1.item(), d_loss_val]
            n_batches += 1
        entry = dict(
            epoch=epoch,
            g_total=float(sums[0] / n_batches),
            g_adv=float(sums[1] / n_batches),
            g_l1=float(sums[2] / n_batches),
            d_loss=float(sums[3] / n_batches),
            val_l1=_val_l1(gen, l_norm[val_idx], lab_raw[val_idx, 1:]) if n_val else None,
        )
        history.append(entry)
    gen.eval()
    return gen, disc, history


def _relativistic_loss(real_logit, fake_logit, for_generator: bool):
    """Relativistic-average objective: each side is judged against the mean
    logit of the other."""
    rel_real = torch.sigmoid(real_logit - fake_logit.mean()).clamp(PROB_EPS, 1 - PROB_EPS)
    rel_fake = torch.sigmoid(fake_logit - real_logit.mean()).clamp(PROB_EPS, 1 - PROB_EPS)
    if for_generator:
        return -(torch.log(rel_fake).mean() + torch.log(1 - rel_real).mean())
    return -(torch.log(rel_real).mean() + torch.log(1 - rel_fake).mean())


# --------------------------------------------------------------------------
# Inference
# --------------------------------------------------------------------------


def generator_forward(i_l: Raster, gen: ChromaUNet) -> np.ndarray:
    """Predict the (H, W, 2) chrominance map for a luminance raster."""
    if i_l.channels != "L":
        raise ValueError("generator consumes L rasters")
    arr = i_l.samples[..., 0]
    if arr.min() < -1e-6 or arr.max() > 100.0 + 1e-6:
        raise ValueError("luminance values must lie in [0, 100]")
    factor = gen.cfg.downsample_factor
    h, w = arr.shape
    pad_b, pad_r = (-h) % factor, (-w) % factor
    x = torch.from_numpy(arr).float().unsqueeze(0).unsqueeze(0) / 50.0 - 1.0
    if pad_b or pad_r:
        x = torch.nn.functional.pad(x, (0, pad_r, 0, pad_b), mode="replicate")
    gen.eval()
    with torch.no_grad():
        ab = gen(x)[0, :, :h, :w]
    if not torch.isfinite(ab).all():
        raise FloatingPointError("non-finite chrominance activations")
    return ab.numpy().transpose(1, 2, 0).astype(np.float64)


def merge_luminance_chroma(i_l: Raster, ab: np.ndarray) -> Raster:
    """Reassemble LAB from preserved luminance plus predicted chrominance;
    the output L channel is the input, bit for bit."""
    if i_l.channels != "L":
        raise ValueError("expected an L raster")
    ab = np.asarray(ab, dtype=np.float64)
    if ab.shape != (i_l.height, i_l.width, 2):
        raise ValueError(f"chroma map shape {ab.shape} does not match raster {i_l.height}x{i_l.width}")
    return Raster("LAB", np.concatenate([i_l.samples, ab], axis=2))


def extract_luminance(lab: Raster) -> Raster:
    if lab.channels != "LAB":
        raise ValueError("expected a LAB raster")
    return Raster("L", lab.samples[..., :1])


def extract_chroma(lab: Raster) -> np.ndarray:
    if lab.channels != "LAB":
        raise ValueError("expected a LAB raster")
    return lab.samples[..., 1:]


def colorize_image(gray: Raster, gen: ChromaUNet, tile: int = 256, overlap: int = 0) -> Raster:
    """Tile-wise colorization: predict chrominance per tile, stitch the
    chroma maps (overlaps averaged), merge with the preserved luminance,
    and convert to RGB."""
    if gray.channels != "L":
        raise ValueError("colorize_image consumes L rasters")
    if tile >= gray.width and tile >= gray.height:
        ab = generator_forward(gray, gen)
    else:
        grid = make_tile_grid(gray.width, gray.height, min(tile, gray.width, gray.height), overlap)
        acc = np.zeros((gray.height, gray.width, 2))
        cnt = np.zeros((gray.height, gray.width, 1))
        for (x, y), t in tile_raster(gray, grid):
            ab_t = generator_forward(t, gen)
            acc[y : y + t.height, x : x + t.width] += ab_t
            cnt[y : y + t.height, x : x + t.width] += 1.0
        ab = acc / cnt
    return lab_to_rgb(merge_luminance_chroma(gray, ab))
