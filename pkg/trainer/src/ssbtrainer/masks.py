"""Random block-grid group masks for training.

Training never sees annotation files; it samples a fresh layout per step so
the attention masking is exercised across group counts and shapes.
"""

from __future__ import annotations

import numpy as np

from ssbcodec import DimensionError


def sample_block_mask(grid_h: int, grid_w: int, rng: np.random.Generator) -> np.ndarray:
    """Random [grid_h, grid_w] int64 grid of contiguous group ids from 0.

    Starts from a single background group and paints 0 to 3 random rectangles
    over it, so between 1 and 4 groups survive; ids are renumbered densely
    since paints may fully cover earlier ones.
    """
    if grid_h <= 0 or grid_w <= 0:
        raise DimensionError(f"grid {grid_h}x{grid_w} must be positive")
    target = int(rng.integers(1, 5))
    grid = np.zeros((grid_h, grid_w), dtype=np.int64)
    for g in range(1, target):
        r0, r1 = sorted(rng.integers(0, grid_h, size=2))
        c0, c1 = sorted(rng.integers(0, grid_w, size=2))
        grid[r0:r1 + 1, c0:c1 + 1] = g
    ids = np.unique(grid)
    return np.searchsorted(ids, grid).astype(np.int64)
