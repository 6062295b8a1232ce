"""Single-process toy training loop.

Small by design: a handful of crops, a fresh random group layout per crop
per step, Adam on the relaxed rate-distortion objective, and hard aborts
on non-finite numbers. Determinism comes from exactly two generators, one
numpy (crops, masks) and one torch (relaxation noise), both seeded from
the config.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ssbcodec import DimensionError

from .config import TrainConfig
from .loss import rd_loss
from .masks import sample_block_mask
from .model import CodecModel
from .sswt import serialize_tensors

MAX_IMAGES = 16


class TrainingDiverged(RuntimeError):
    """Loss or a gradient stopped being finite; training state is unusable."""


@dataclass
class TrainResult:
    model: CodecModel
    losses: list[float]


def _to_float_tensor(image: np.ndarray, crop_size: int) -> torch.Tensor:
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise DimensionError(f"expected [3, H, W] image, got {arr.shape}")
    if arr.dtype != np.uint8:
        raise DimensionError(f"expected uint8 pixels, got {arr.dtype}")
    if arr.shape[1] < crop_size or arr.shape[2] < crop_size:
        raise DimensionError(
            f"image {arr.shape[1]}x{arr.shape[2]} smaller than crop {crop_size}")
    return torch.from_numpy(arr.astype(np.float32) / 255.0)


def export_weights(model: CodecModel) -> bytes:
    """Serialized weight file bytes for the model's current tensors."""
    return serialize_tensors(model.export_tensors())


def train_toy(images: list[np.ndarray], cfg: TrainConfig) -> TrainResult:
    """Fit a model to at most 16 uint8 [3, H, W] images and return it with
    the per-step loss history.

    Each step draws one random crop_size crop and one random group layout
    per image, averages the loss, and aborts with TrainingDiverged the
    moment the loss or any gradient goes non-finite.
    """
    cfg = cfg.validate()
    if not 1 <= len(images) <= MAX_IMAGES:
        raise DimensionError(f"need 1 to {MAX_IMAGES} images, got {len(images)}")
    crop = cfg.crop_size
    floats = [_to_float_tensor(img, crop) for img in images]

    rng = np.random.default_rng(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    model = CodecModel(cfg.architecture, seed=cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    gdim = crop // cfg.architecture.block_size

    losses: list[float] = []
    for step in range(cfg.steps):
        opt.zero_grad()
        total = None
        for img in floats:
            oy = int(rng.integers(0, img.shape[1] - crop + 1))
            ox = int(rng.integers(0, img.shape[2] - crop + 1))
            patch = img[:, oy:oy + crop, ox:ox + crop]
            grid = sample_block_mask(gdim, gdim, rng)
            out = model.training_forward(patch, grid, gen)
            term = rd_loss(patch, out.x_hat, out.rate_bits, cfg.beta)
            total = term if total is None else total + term
        loss = total / len(floats)
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"step {step}: loss {loss.item()} is not finite")
        loss.backward()
        for name, p in model.named_parameters():
            if p.grad is not None and not torch.isfinite(p.grad).all():
                raise TrainingDiverged(
                    f"step {step}: gradient of {name.replace('__', '.')} "
                    f"is not finite (loss {loss.item():.6g})")
        opt.step()
        losses.append(float(loss.detach()))
    return TrainResult(model=model, losses=losses)
