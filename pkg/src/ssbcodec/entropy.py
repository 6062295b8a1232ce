"""Quantization, Gaussian likelihoods, and entropy-parameter prediction.

Entropy parameters shape code lengths only.  Reconstruction uses plainly
rounded latents, so a decoded group never depends on another group's
content through the entropy path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .config import CodecConfig
from .errors import SequencingError
from .transform import RuntimeModel, conv1x1, relu, softplus

LIKELIHOOD_FLOOR = 2.0 ** -32


def quantize(y: np.ndarray) -> np.ndarray:
    """Round half away from zero, exact for every float32 input."""
    y64 = np.asarray(y, dtype=np.float64)
    return (np.sign(y64) * np.floor(np.abs(y64) + 0.5)).astype(np.int32)


def add_uniform_noise(y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    y = np.asarray(y, dtype=np.float32)
    return y + (rng.random(y.shape, dtype=np.float32) - 0.5)


def gaussian_likelihood(symbols: np.ndarray, mu: np.ndarray,
                        sigma: np.ndarray) -> np.ndarray:
    """P(symbol) under a Gaussian convolved with unit uniform noise.

    Computed on |s - mu| so the result is exactly symmetric, floored at
    2^-32 to bound code lengths.
    """
    a = np.abs(np.asarray(symbols, np.float64) - np.asarray(mu, np.float64))
    sigma = np.asarray(sigma, np.float64)
    p = ndtr((0.5 - a) / sigma) - ndtr((-0.5 - a) / sigma)
    return np.maximum(p, LIKELIHOOD_FLOOR)


def bits_from_probs(probs: np.ndarray) -> np.ndarray:
    return -np.log2(probs)


@dataclass(frozen=True)
class GaussianParams:
    mu: np.ndarray
    sigma: np.ndarray  # >= sigma_min everywhere

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape:
            raise SequencingError(
                f"mu {self.mu.shape} vs sigma {self.sigma.shape}")


def params_from_hyper(features: np.ndarray, cfg: CodecConfig) -> GaussianParams:
    """Split h_s output into (mu, sigma); the direct path when ChARM is off."""
    m = cfg.latent_channels
    if features.shape[0] != 2 * m:
        raise SequencingError(f"hyper features {features.shape[0]} != 2M = {2 * m}")
    mu = np.ascontiguousarray(features[:m])
    sigma = cfg.sigma_min + softplus(features[m:])
    return GaussianParams(mu=mu, sigma=np.ascontiguousarray(sigma))


def slice_ranges(cfg: CodecConfig) -> list[tuple[int, int]]:
    """Channel span of each autoregressive slice."""
    spans = []
    start = 0
    for w in cfg.slice_widths():
        spans.append((start, start + w))
        start += w
    return spans


def charm_params(hyper_feat: np.ndarray, prev_slices: np.ndarray,
                 rt: RuntimeModel, s: int) -> GaussianParams:
    """Entropy parameters of slice s from hyper features and slices < s.

    The context network is position-wise (1x1), so a cell's parameters see
    only that cell's own earlier slices; this is what keeps single-group
    decoding possible.
    """
    cfg = rt.cfg
    if not cfg.charm_enabled:
        raise SequencingError("charm_params called with charm disabled")
    if not 0 <= s < cfg.slices:
        raise SequencingError(f"slice {s} outside [0, {cfg.slices})")
    start, end = slice_ranges(cfg)[s]
    if prev_slices.shape[0] != start:
        raise SequencingError(
            f"slice {s} needs {start} context channels, got {prev_slices.shape[0]}")
    if prev_slices.shape[1:] != hyper_feat.shape[1:]:
        raise SequencingError(
            f"context {prev_slices.shape[1:]} vs hyper {hyper_feat.shape[1:]}")
    feat = np.concatenate([hyper_feat, prev_slices.astype(np.float32)], axis=0)
    w1, b1, w2, b2 = rt.charm[s]
    h = relu(conv1x1(feat, w1, b1))
    out = conv1x1(h, w2, b2)
    width = end - start
    mu = np.ascontiguousarray(out[:width])
    sigma = cfg.sigma_min + softplus(out[width:])
    return GaussianParams(mu=mu, sigma=np.ascontiguousarray(sigma))


def fp_params(rt: RuntimeModel, shape_hw: tuple[int, int]) -> GaussianParams:
    """Per-channel factorized prior for the hyper latents, broadcast to a grid."""
    h, w = shape_hw
    mu = np.broadcast_to(rt.fp_mu[:, None, None], (rt.fp_mu.size, h, w))
    sigma = np.broadcast_to(rt.fp_sigma[:, None, None], (rt.fp_sigma.size, h, w))
    return GaussianParams(mu=np.ascontiguousarray(mu), sigma=np.ascontiguousarray(sigma))


@dataclass(frozen=True)
class RateReport:
    total_bits: float
    per_group: dict[int, float]


def rate_from_probs(probs: np.ndarray,
                    group_ids: np.ndarray | None = None) -> RateReport:
    """Sum of -log2 p, total and split by the cell ids (fixed id order)."""
    bits = bits_from_probs(probs)
    per_group: dict[int, float] = {}
    if group_ids is not None:
        for g in sorted(int(v) for v in np.unique(group_ids)):
            per_group[g] = float(bits[..., group_ids == g].sum())
        total = sum(per_group.values())
    else:
        total = float(bits.sum())
    return RateReport(total_bits=total, per_group=per_group)


def estimate_rate(symbols: np.ndarray, params: GaussianParams,
                  group_ids: np.ndarray | None = None) -> RateReport:
    probs = gaussian_likelihood(symbols, params.mu, params.sigma)
    return rate_from_probs(probs, group_ids)
