"""Adversarial and reconstruction losses for the colorizer, plus the
scaled-dot-product attention primitive used by the generator."""

from __future__ import annotations

import math

import torch

from ..imagery import Raster

PROB_EPS = 1e-7


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, Raster):
        x = x.samples
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(x, dtype=torch.float64)


def self_attention(q, k, v) -> torch.Tensor:
    """softmax(Q K^T / sqrt(d_k)) V for (n, d_k) queries/keys and (n, d_v)
    values; every output row is a convex combination of rows of V."""
    q, k, v = _as_tensor(q), _as_tensor(k), _as_tensor(v)
    if q.shape[-1] != k.shape[-1]:
        raise ValueError("query and key dimensionality differ")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError("key and value row counts differ")
    d_k = q.shape[-1]
    scores = q @ k.transpose(-1, -2) / math.sqrt(d_k)
    if not torch.isfinite(scores).all():
        raise FloatingPointError("non-finite attention scores")
    return torch.softmax(scores, dim=-1) @ v


def gan_loss(d_real, d_fake) -> torch.Tensor:
    """Mean of log D(real) plus mean of log(1 - D(fake)); probabilities are
    clamped to [eps, 1-eps], so the value is always <= 0 and approaches 0
    only for a perfect discriminator."""
    dr = _as_tensor(d_real).clamp(PROB_EPS, 1.0 - PROB_EPS)
    df = _as_tensor(d_fake).clamp(PROB_EPS, 1.0 - PROB_EPS)
    return torch.log(dr).mean() + torch.log(1.0 - df).mean()


def l1_loss(real, fake) -> torch.Tensor:
    """Mean absolute difference over all samples."""
    a, b = _as_tensor(real), _as_tensor(fake)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()
