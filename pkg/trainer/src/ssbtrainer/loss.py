"""Rate-distortion objective.

Rate uses the additive-noise relaxation: a symbol's probability mass is the
Gaussian measure of a unit interval around its noised value, floored so the
log stays finite. Distortion is mean squared error on [0, 1] RGB.
"""

from __future__ import annotations

import math

import torch

from ssbcodec import DimensionError

# Same floor the codec applies before taking logs.
LIKELIHOOD_FLOOR = 2.0 ** -32
_LOG2 = math.log(2.0)


def noisy_gaussian_bits(values: torch.Tensor, mu: torch.Tensor,
                        sigma: torch.Tensor) -> torch.Tensor:
    """Elementwise -log2 P(values - mu in unit interval) under N(0, sigma^2).

    Mirrors the codec's table builder: centered absolute argument, a CDF
    difference over [-1/2, 1/2], and the same probability floor.
    """
    a = torch.abs(values - mu)
    p = torch.special.ndtr((0.5 - a) / sigma) - torch.special.ndtr((-0.5 - a) / sigma)
    return -torch.log(torch.clamp_min(p, LIKELIHOOD_FLOOR)) / _LOG2


def rd_loss(x: torch.Tensor, x_hat: torch.Tensor, rate_bits: torch.Tensor,
            beta: float) -> torch.Tensor:
    """rate_bits / pixels + beta * MSE(x, x_hat), the quantity training descends.

    x and x_hat are [3, H, W] floats in [0, 1]; rate_bits is the total bit
    estimate for the whole image, so the first term is bits per pixel.
    """
    if beta <= 0:
        raise DimensionError(f"beta must be positive, got {beta}")
    if x.shape != x_hat.shape or x.dim() != 3 or x.shape[0] != 3:
        raise DimensionError(
            f"expected matching [3, H, W] images, got {tuple(x.shape)} "
            f"and {tuple(x_hat.shape)}")
    pixels = x.shape[1] * x.shape[2]
    return rate_bits / pixels + beta * torch.mean((x - x_hat) ** 2)
