"""Discretized Gaussian CDF tables for the range coder.

64 log-spaced scales; each scale gets cumulative frequencies over residuals
in [-L, L] with tail mass folded into the edge bins.  Quantization floors
every bin at one frequency unit and settles the rounding remainder on the
center bin, which keeps the tables exactly symmetric.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

SCALE_LEVELS = 64
SCALE_MAX = 64.0


def scale_table(sigma_min: float = 0.11, sigma_max: float = SCALE_MAX,
                levels: int = SCALE_LEVELS) -> np.ndarray:
    """Log-spaced coding scales in [sigma_min, sigma_max]."""
    return np.exp(np.linspace(np.log(sigma_min), np.log(sigma_max), levels))


def build_cdf_tables(scales: np.ndarray, bound: int = 64,
                     precision: int = 16) -> np.ndarray:
    """uint32 [levels, 2*bound+2] cumulative frequency tables."""
    total = 1 << precision
    r = np.arange(-bound, bound + 1, dtype=np.float64)
    tables = np.empty((len(scales), 2 * bound + 2), dtype=np.uint32)
    for i, sigma in enumerate(scales):
        upper = ndtr((r + 0.5) / sigma)
        lower = ndtr((r - 0.5) / sigma)
        pmf = upper - lower
        pmf[0] = upper[0]          # everything below -L
        pmf[-1] = 1.0 - lower[-1]  # everything above L
        freq = np.maximum(1, np.round(pmf * total).astype(np.int64))
        freq[bound] += total - freq.sum()
        if freq[bound] < 1:
            raise AssertionError(f"center bin exhausted at sigma={sigma}")
        cdf = np.zeros(2 * bound + 2, dtype=np.int64)
        np.cumsum(freq, out=cdf[1:])
        tables[i] = cdf
    return tables


def scale_index(sigma: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Smallest table scale >= predicted sigma; saturates at the last table."""
    idx = np.searchsorted(scales, np.asarray(sigma, np.float64), side="left")
    return np.minimum(idx, len(scales) - 1).astype(np.int32)
