"""Deterministic numeric primitives for the transforms.

All ops are pure functions over float32 numpy arrays.  Reductions inside a
single op always run in the same order for a given shape, so repeated calls
with identical inputs produce identical bytes; nothing here reassociates
sums based on values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

# Additive score for disallowed attention pairs.  After max subtraction the
# masked scores sit near -1e9, far below float32's exp underflow threshold
# (~-88), so their softmax weight is exactly +0.0.
MASK_FILL = -1e9


def as_f32(x) -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=np.float32)
    return a


def _check_finite(x: np.ndarray) -> np.ndarray:
    assert np.isfinite(x).all(), "non-finite value produced by primitive"
    return x


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = as_f32(a)
    b = as_f32(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects rank-2 operands, got {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    return _check_finite(a @ b)


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """x [..., d_in] @ w [d_in, d_out] + b."""
    x = as_f32(x)
    w = as_f32(w)
    if x.shape[-1] != w.shape[0]:
        raise DimensionError(f"linear: {x.shape[-1]} inputs vs weight {w.shape}")
    y = x @ w
    if b is not None:
        y = y + as_f32(b)
    return _check_finite(y)


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    v = as_f32(v)
    shifted = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return _check_finite(e / np.sum(e, axis=axis, keepdims=True))


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
               eps: float = 1e-5) -> np.ndarray:
    """Normalize over the last axis (per token)."""
    x = as_f32(x)
    mean = np.mean(x, axis=-1, keepdims=True)
    centered = x - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    xhat = centered / np.sqrt(var + eps)
    return _check_finite(xhat * as_f32(gamma) + as_f32(beta))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: np.ndarray) -> np.ndarray:
    """tanh approximation, matching the training-side activation."""
    x = as_f32(x)
    inner = _GELU_C * (x + 0.044715 * x * x * x)
    return _check_finite(0.5 * x * (1.0 + np.tanh(inner)))


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return v, v
    a, b = v
    return int(a), int(b)


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None,
           stride=1, padding=0) -> np.ndarray:
    """x [C_in, H, W], w [C_out, C_in, kh, kw], zero padding."""
    x = as_f32(x)
    w = as_f32(w)
    if x.ndim != 3 or w.ndim != 4:
        raise DimensionError(f"conv2d: rank {x.ndim} input, rank {w.ndim} kernel")
    cin, H, W = x.shape
    cout, cin2, kh, kw = w.shape
    if cin != cin2:
        raise DimensionError(f"conv2d channels: input {cin}, kernel expects {cin2}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if H + 2 * ph < kh or W + 2 * pw < kw:
        raise DimensionError("conv2d: kernel larger than padded input")
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, ::sh, ::sw]  # [cin, Hout, Wout, kh, kw]
    hout, wout = win.shape[1], win.shape[2]
    cols = win.transpose(0, 3, 4, 1, 2).reshape(cin * kh * kw, hout * wout)
    y = (w.reshape(cout, cin * kh * kw) @ np.ascontiguousarray(cols))
    y = y.reshape(cout, hout, wout)
    if b is not None:
        y = y + as_f32(b).reshape(cout, 1, 1)
    return _check_finite(y)


def conv_transpose2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None,
                     stride=1, padding=0, output_padding=0) -> np.ndarray:
    """x [C_in, H, W], w [C_in, C_out, kh, kw]; inverse-shape of conv2d."""
    x = as_f32(x)
    w = as_f32(w)
    if x.ndim != 3 or w.ndim != 4:
        raise DimensionError(f"conv_transpose2d: rank {x.ndim} input, rank {w.ndim} kernel")
    cin, H, W = x.shape
    cin2, cout, kh, kw = w.shape
    if cin != cin2:
        raise DimensionError(f"conv_transpose2d channels: input {cin}, kernel expects {cin2}")
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    oph, opw = _pair(output_padding)
    hout = (H - 1) * sh - 2 * ph + kh + oph
    wout = (W - 1) * sw - 2 * pw + kw + opw
    if hout <= 0 or wout <= 0:
        raise DimensionError("conv_transpose2d: empty output")
    # [cout, kh, kw, H, W]; scatter-add each tap into the strided output grid.
    prod = np.tensordot(w, x, axes=([0], [0]))
    buf = np.zeros((cout, (H - 1) * sh + kh, (W - 1) * sw + kw), dtype=np.float32)
    for ki in range(kh):
        for kj in range(kw):
            buf[:, ki:ki + (H - 1) * sh + 1:sh,
                kj:kj + (W - 1) * sw + 1:sw] += prod[:, ki, kj]
    out = np.zeros((cout, hout, wout), dtype=np.float32)
    src = buf[:, ph:ph + hout, pw:pw + wout]
    out[:, :src.shape[1], :src.shape[2]] = src
    if b is not None:
        out = out + as_f32(b).reshape(cout, 1, 1)
    return _check_finite(out)


def pixel_unshuffle(t: np.ndarray, r: int) -> np.ndarray:
    """[C, H, W] -> [C*r*r, H/r, W/r]; out[c*r*r + i*r + j, h, w] = in[c, h*r+i, w*r+j]."""
    t = as_f32(t)
    if t.ndim != 3:
        raise DimensionError(f"pixel_unshuffle expects rank-3, got {t.ndim}")
    c, H, W = t.shape
    if r <= 0 or H % r or W % r:
        raise DimensionError(f"pixel_unshuffle: {H}x{W} not divisible by r={r}")
    out = t.reshape(c, H // r, r, W // r, r).transpose(0, 2, 4, 1, 3)
    return np.ascontiguousarray(out.reshape(c * r * r, H // r, W // r))


def pixel_shuffle(t: np.ndarray, r: int) -> np.ndarray:
    """Exact inverse of pixel_unshuffle."""
    t = as_f32(t)
    if t.ndim != 3:
        raise DimensionError(f"pixel_shuffle expects rank-3, got {t.ndim}")
    c, H, W = t.shape
    if r <= 0 or c % (r * r):
        raise DimensionError(f"pixel_shuffle: {c} channels not divisible by r*r={r * r}")
    cnew = c // (r * r)
    out = t.reshape(cnew, r, r, H, W).transpose(0, 3, 1, 4, 2)
    return np.ascontiguousarray(out.reshape(cnew, H * r, W * r))


@dataclass(frozen=True)
class AttentionWeights:
    """Projection weights for one attention layer, [d_in, d_out] layout."""

    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray


def masked_mhsa_batched(x: np.ndarray, add_mask: np.ndarray,
                        weights: AttentionWeights, heads: int,
                        bias: np.ndarray | None = None) -> np.ndarray:
    """Multi-head self-attention over a batch of windows.

    x [nw, n, d]; add_mask [nw, n, n] additive (0 allowed / MASK_FILL not);
    bias, if given, [heads, n, n] added to every window's scores.
    """
    x = as_f32(x)
    nw, n, d = x.shape
    if d % heads:
        raise DimensionError(f"dim {d} not divisible by {heads} heads")
    dh = d // heads
    add_mask = as_f32(add_mask)
    if add_mask.shape[-2:] != (n, n):
        raise DimensionError(f"mask shape {add_mask.shape} vs {n} tokens")

    def split(v):
        return v.reshape(nw, n, heads, dh).transpose(0, 2, 1, 3)

    q = split(linear(x, weights.wq, weights.bq))
    k = split(linear(x, weights.wk, weights.bk))
    v = split(linear(x, weights.wv, weights.bv))
    scores = np.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dh))
    if bias is not None:
        scores = scores + as_f32(bias)[None, :, :, :]
    scores = scores + add_mask[:, None, :, :]
    attn = softmax(scores, axis=-1)
    ctx = np.matmul(attn, v)  # [nw, heads, n, dh]
    ctx = ctx.transpose(0, 2, 1, 3).reshape(nw, n, d)
    return linear(ctx, weights.wo, weights.bo)


def masked_mhsa(x: np.ndarray, mask: np.ndarray, weights: AttentionWeights,
                heads: int, bias: np.ndarray | None = None) -> np.ndarray:
    """Single-window form: x [n_tokens, dim], mask [n, n] boolean or additive."""
    x = as_f32(x)
    if x.ndim != 2:
        raise DimensionError(f"masked_mhsa expects rank-2 tokens, got {x.ndim}")
    mask = np.asarray(mask)
    if mask.dtype == bool:
        mask = np.where(mask, 0.0, MASK_FILL).astype(np.float32)
    out = masked_mhsa_batched(x[None], mask[None], weights, heads, bias=bias)
    return out[0]


def allow_to_additive(allow: np.ndarray) -> np.ndarray:
    """Boolean allow matrix -> additive float32 mask (0 / MASK_FILL)."""
    return np.where(allow, 0.0, MASK_FILL).astype(np.float32)
