"""Training companion for the grouped image codec.

Re-implements the codec's transforms differentiably, trains them on small
image sets with a relaxed rate-distortion loss, and writes weight files the
codec loads directly.
"""

from .config import TrainConfig, train_config_from_text, train_config_to_text
from .loss import LIKELIHOOD_FLOOR, noisy_gaussian_bits, rd_loss
from .masks import sample_block_mask
from .model import CodecModel, ForwardOutputs, init_tensors, round_half_away, round_ste
from .sswt import (deserialize_tensors, fnv1a64, load_tensors, save_tensors,
                   serialize_tensors, weight_manifest)
from .train import (MAX_IMAGES, TrainingDiverged, TrainResult, export_weights,
                    train_toy)

__version__ = "0.1.0"

__all__ = [
    "TrainConfig",
    "train_config_from_text",
    "train_config_to_text",
    "LIKELIHOOD_FLOOR",
    "noisy_gaussian_bits",
    "rd_loss",
    "sample_block_mask",
    "CodecModel",
    "ForwardOutputs",
    "init_tensors",
    "round_half_away",
    "round_ste",
    "deserialize_tensors",
    "fnv1a64",
    "load_tensors",
    "save_tensors",
    "serialize_tensors",
    "weight_manifest",
    "MAX_IMAGES",
    "TrainingDiverged",
    "TrainResult",
    "export_weights",
    "train_toy",
    "__version__",
]
