"""Shared test helpers, importable by name from any test module."""

import numpy as np

from ssbcodec.config import CodecConfig
from ssbcodec.groupmask import GroupMask
from ssbcodec.nn import AttentionWeights
from ssbcodec.transform import SwinBlockRt, relative_position_index


def random_attention_weights(rng: np.random.Generator, dim: int,
                             scale: float = 0.5) -> AttentionWeights:
    def mat():
        return (rng.standard_normal((dim, dim)) * scale / np.sqrt(dim)).astype(np.float32)

    def vec():
        return (rng.standard_normal(dim) * 0.1).astype(np.float32)

    return AttentionWeights(wq=mat(), bq=vec(), wk=mat(), bk=vec(),
                            wv=mat(), bv=vec(), wo=mat(), bo=vec())


def random_swin_block(rng: np.random.Generator, dim: int, heads: int,
                      window: int) -> SwinBlockRt:
    table = (rng.standard_normal(((2 * window - 1) ** 2, heads)) * 0.2).astype(np.float32)
    bias = np.ascontiguousarray(
        table[relative_position_index(window)].transpose(2, 0, 1), dtype=np.float32)
    return SwinBlockRt(
        ln1_g=np.ones(dim, np.float32),
        ln1_b=np.zeros(dim, np.float32),
        attn=random_attention_weights(rng, dim),
        bias=bias,
        ln2_g=np.ones(dim, np.float32),
        ln2_b=np.zeros(dim, np.float32),
        fc1_w=(rng.standard_normal((dim, 4 * dim)) * 0.3 / np.sqrt(dim)).astype(np.float32),
        fc1_b=np.zeros(4 * dim, np.float32),
        fc2_w=(rng.standard_normal((4 * dim, dim)) * 0.3 / np.sqrt(4 * dim)).astype(np.float32),
        fc2_b=np.zeros(dim, np.float32),
        heads=heads)


def tiny_config(**overrides) -> CodecConfig:
    base = dict(channels=(8, 8, 8, 8), depths=(1, 2, 2, 1), heads=(2, 2, 2, 2),
                window_size=4, latent_channels=8, hyper_channels=8,
                slices=2, block_size=16)
    base.update(overrides)
    return CodecConfig(**base).validate()


def mask_from_grid(grid, block_size=16, image_hw=None) -> GroupMask:
    grid = np.asarray(grid, dtype=np.uint16)
    gh, gw = grid.shape
    ph, pw = gh * block_size, gw * block_size
    h, w = image_hw if image_hw else (ph, pw)
    return GroupMask(image_h=h, image_w=w, padded_h=ph, padded_w=pw,
                     block_size=block_size, grid=grid,
                     n_groups=int(grid.max()) + 1)


# acceptance verdicts, printed as a checklist after the test summary
ACCEPTANCE_VERDICTS: list[tuple[str, bool]] = []


def record_verdict(name: str, ok: bool) -> None:
    ACCEPTANCE_VERDICTS.append((name, ok))
