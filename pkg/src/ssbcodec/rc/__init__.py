"""Range coding: backend selection, CDF tables, symbol-sequence helpers.

The compiled backend is preferred when its extension built; setting
SSB_RC_BACKEND=python (or =compiled) forces a choice.  Both backends are
byte-identical state machines, so streams are interchangeable.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import FormatError
from . import _rc_py
from .tables import build_cdf_tables, scale_index, scale_table

_choice = os.environ.get("SSB_RC_BACKEND", "auto")
_impl = None
if _choice in ("auto", "compiled"):
    try:
        from . import _rc as _impl
    except ImportError:
        if _choice == "compiled":
            raise
if _impl is None:
    _impl = _rc_py

BACKEND = _impl.BACKEND_NAME
RangeEncoder = _impl.RangeEncoder
RangeDecoder = _impl.RangeDecoder
encode_block = _impl.encode_block
decode_block = _impl.decode_block


def encode_symbols(residuals: np.ndarray, scale_indices: np.ndarray,
                   cdfs: np.ndarray, bound: int, precision: int = 16) -> bytes:
    """One whole substream: residuals in [-bound, bound] against per-symbol tables."""
    residuals = np.asarray(residuals, dtype=np.int32)
    scale_indices = np.asarray(scale_indices, dtype=np.int32)
    if residuals.shape != scale_indices.shape or residuals.ndim != 1:
        raise FormatError(
            f"residuals {residuals.shape} vs scale indices {scale_indices.shape}")
    if residuals.size and (np.abs(residuals).max() > bound):
        raise FormatError(f"residual outside [-{bound}, {bound}]")
    if scale_indices.size and not (0 <= scale_indices.min()
                                   and scale_indices.max() < cdfs.shape[0]):
        raise FormatError("scale index outside table")
    enc = RangeEncoder(precision)
    encode_block(enc, residuals, scale_indices, cdfs, bound)
    return enc.finish()


def decode_symbols(data: bytes, scale_indices: np.ndarray, count: int,
                   cdfs: np.ndarray, bound: int, precision: int = 16) -> np.ndarray:
    scale_indices = np.asarray(scale_indices, dtype=np.int32)
    if scale_indices.shape != (count,):
        raise FormatError(f"expected {count} scale indices, got {scale_indices.shape}")
    dec = RangeDecoder(data, precision)
    return decode_block(dec, scale_indices, cdfs, bound)
