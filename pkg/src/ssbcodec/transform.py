"""Group-independent transforms: windowed attention that never mixes groups.

The analysis/synthesis transforms alternate pixel shuffle resampling with
attention blocks whose windows are additionally partitioned by the group
mask, so features of one group never read another group's content.  The
hyper transforms are deliberately not group-independent: their output only
shapes code lengths, never reconstructed values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .config import STAGE_STRIDES, CodecConfig
from .errors import DimensionError
from .groupmask import GroupMask, downsample
from .weights import ModelWeights, check_weights

# Group id for padding tokens; real ids stop at 65534.
SENTINEL = 0xFFFF


def relative_position_index(w: int) -> np.ndarray:
    """[w*w, w*w] indices into a (2w-1)^2 bias table, standard layout."""
    coords = np.stack(np.meshgrid(np.arange(w), np.arange(w), indexing="ij"))
    flat = coords.reshape(2, -1)
    rel = flat[:, :, None] - flat[:, None, :] + (w - 1)
    return rel[0] * (2 * w - 1) + rel[1]


@dataclass(frozen=True)
class WindowLayout:
    height: int
    width: int
    padded_h: int
    padded_w: int
    window: int
    shift: int


def _shift_regions(hp: int, wp: int, w: int, shift: int) -> np.ndarray:
    """Label each cell of the rolled canvas with its pre-shift sub-window region."""
    region = np.zeros((hp, wp), dtype=np.int32)
    if shift == 0:
        return region
    spans = (slice(0, hp - w), slice(hp - w, hp - shift), slice(hp - shift, None))
    spans_w = (slice(0, wp - w), slice(wp - w, wp - shift), slice(wp - shift, None))
    label = 0
    for hs in spans:
        for ws in spans_w:
            region[hs, ws] = label
            label += 1
    return region


def gi_window_partition(feat: np.ndarray, mask_grid: np.ndarray, w: int,
                        shift: int, group_attention: bool = True):
    """Split features into w x w windows with per-window attention masks.

    Returns (tokens [nw, w*w, C], additive masks [nw, w*w, w*w], layout).
    Within a window, attention is allowed between same-group cells lying in
    the same pre-shift region; padding tokens attend only themselves.
    """
    if feat.ndim != 3:
        raise DimensionError(f"expected [C,H,W] features, got rank {feat.ndim}")
    c, h, wd = feat.shape
    if mask_grid.shape != (h, wd):
        raise DimensionError(f"mask grid {mask_grid.shape} vs features {(h, wd)}")
    if shift not in (0, w // 2):
        raise DimensionError(f"shift must be 0 or {w // 2}, got {shift}")
    hp = ((h + w - 1) // w) * w
    wp = ((wd + w - 1) // w) * w
    grid = np.full((hp, wp), SENTINEL, dtype=np.int32)
    grid[:h, :wd] = mask_grid.astype(np.int32)
    canvas = np.zeros((c, hp, wp), dtype=np.float32)
    canvas[:, :h, :wd] = feat

    if shift:
        canvas = np.roll(canvas, (-shift, -shift), axis=(1, 2))
        grid = np.roll(grid, (-shift, -shift), axis=(0, 1))
    region = _shift_regions(hp, wp, w, shift)

    nh, nw_ = hp // w, wp // w
    n = w * w
    tokens = canvas.reshape(c, nh, w, nw_, w).transpose(1, 3, 2, 4, 0).reshape(nh * nw_, n, c)
    gwin = grid.reshape(nh, w, nw_, w).transpose(0, 2, 1, 3).reshape(nh * nw_, n)
    rwin = region.reshape(nh, w, nw_, w).transpose(0, 2, 1, 3).reshape(nh * nw_, n)

    allow = rwin[:, :, None] == rwin[:, None, :]
    if group_attention:
        allow &= gwin[:, :, None] == gwin[:, None, :]
    pad = gwin == SENTINEL
    allow &= ~(pad[:, :, None] | pad[:, None, :])
    idx = np.arange(n)
    allow[:, idx, idx] = True
    add_mask = np.where(allow, 0.0, nn.MASK_FILL).astype(np.float32)
    layout = WindowLayout(height=h, width=wd, padded_h=hp, padded_w=wp,
                          window=w, shift=shift)
    return np.ascontiguousarray(tokens), add_mask, layout


def gi_window_unpartition(tokens: np.ndarray, layout: WindowLayout) -> np.ndarray:
    """Inverse of gi_window_partition, including reverse shift and crop."""
    nh = layout.padded_h // layout.window
    nw_ = layout.padded_w // layout.window
    w = layout.window
    c = tokens.shape[-1]
    canvas = tokens.reshape(nh, nw_, w, w, c).transpose(4, 0, 2, 1, 3)
    canvas = canvas.reshape(c, layout.padded_h, layout.padded_w)
    if layout.shift:
        canvas = np.roll(canvas, (layout.shift, layout.shift), axis=(1, 2))
    return np.ascontiguousarray(canvas[:, :layout.height, :layout.width])


@dataclass(frozen=True)
class SwinBlockRt:
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    attn: nn.AttentionWeights
    bias: np.ndarray  # [heads, w*w, w*w]
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray
    heads: int


def gi_swin_block(feat: np.ndarray, mask_grid: np.ndarray, blk: SwinBlockRt,
                  window: int, shift: int, group_attention: bool = True) -> np.ndarray:
    """Pre-norm residual block under the group-aware window mask."""
    tokens, add_mask, layout = gi_window_partition(
        feat, mask_grid, window, shift, group_attention)
    x = tokens
    h = nn.layer_norm(x, blk.ln1_g, blk.ln1_b)
    x = x + nn.masked_mhsa_batched(h, add_mask, blk.attn, blk.heads, bias=blk.bias)
    h = nn.layer_norm(x, blk.ln2_g, blk.ln2_b)
    h = nn.linear(nn.gelu(nn.linear(h, blk.fc1_w, blk.fc1_b)), blk.fc2_w, blk.fc2_b)
    x = x + h
    return gi_window_unpartition(x, layout)


def conv1x1(feat: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Position-wise channel mix: w [out, in] applied at every cell."""
    if feat.shape[0] != w.shape[1]:
        raise DimensionError(f"conv1x1: {feat.shape[0]} channels vs weight {w.shape}")
    out = np.tensordot(w, feat, axes=([1], [0]))
    return (out + b[:, None, None]).astype(np.float32, copy=False)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x).astype(np.float32, copy=False)


class RuntimeModel:
    """Weights rearranged for the forward pass, plus per-stage bias tables."""

    def __init__(self, weights: ModelWeights, cfg: CodecConfig):
        check_weights(weights, cfg)
        self.cfg = cfg.validate()
        self.digest = weights.digest
        t = weights.tensors
        w = cfg.window_size
        rel_idx = relative_position_index(w)

        def attn_rt(prefix: str) -> nn.AttentionWeights:
            return nn.AttentionWeights(
                wq=t[prefix + "attn.wq"].T.copy(), bq=t[prefix + "attn.bq"],
                wk=t[prefix + "attn.wk"].T.copy(), bk=t[prefix + "attn.bk"],
                wv=t[prefix + "attn.wv"].T.copy(), bv=t[prefix + "attn.bv"],
                wo=t[prefix + "attn.wo"].T.copy(), bo=t[prefix + "attn.bo"])

        def block_rt(prefix: str, heads: int) -> SwinBlockRt:
            table = t[prefix + "attn.rel_bias"]
            bias = np.ascontiguousarray(table[rel_idx].transpose(2, 0, 1), dtype=np.float32)
            return SwinBlockRt(
                ln1_g=t[prefix + "ln1.g"], ln1_b=t[prefix + "ln1.b"],
                attn=attn_rt(prefix), bias=bias,
                ln2_g=t[prefix + "ln2.g"], ln2_b=t[prefix + "ln2.b"],
                fc1_w=t[prefix + "mlp.fc1.w"].T.copy(), fc1_b=t[prefix + "mlp.fc1.b"],
                fc2_w=t[prefix + "mlp.fc2.w"].T.copy(), fc2_b=t[prefix + "mlp.fc2.b"],
                heads=heads)

        self.ga_down = [(t[f"ga.down{i}.w"], t[f"ga.down{i}.b"]) for i in range(4)]
        self.ga_stages = [
            [block_rt(f"ga.s{i}.b{j}.", cfg.heads[i]) for j in range(cfg.depths[i])]
            for i in range(4)]
        self.ga_head = (t["ga.head.w"], t["ga.head.b"])

        self.gs_embed = (t["gs.embed.w"], t["gs.embed.b"])
        self.gs_stages = [
            [block_rt(f"gs.s{i}.b{j}.", cfg.heads[3 - i]) for j in range(cfg.depths[3 - i])]
            for i in range(4)]
        self.gs_up = [(t[f"gs.up{i}.w"], t[f"gs.up{i}.b"]) for i in range(3)]
        self.gs_out = (t["gs.out.w"], t["gs.out.b"])

        self.ha = (t["ha.c1.w"], t["ha.c1.b"], t["ha.c2.w"], t["ha.c2.b"])
        self.hs = (t["hs.d1.w"], t["hs.d1.b"], t["hs.d2.w"], t["hs.d2.b"])

        self.charm = []
        if cfg.charm_enabled:
            for s in range(cfg.slices):
                self.charm.append((t[f"charm.s{s}.fc1.w"], t[f"charm.s{s}.fc1.b"],
                                   t[f"charm.s{s}.fc2.w"], t[f"charm.s{s}.fc2.b"]))
        self.fp_mu = t["fp.mu"].astype(np.float32)
        self.fp_sigma = (cfg.sigma_min + softplus(t["fp.sigma_raw"])).astype(np.float32)


def _stage_grid(mask: GroupMask, stride: int) -> np.ndarray:
    return downsample(mask, stride).astype(np.int32)


def analysis_transform(x: np.ndarray, mask: GroupMask, rt: RuntimeModel) -> np.ndarray:
    """g_a: [3, padded_h, padded_w] in [0,1] -> latents [M, H/16, W/16]."""
    cfg = rt.cfg
    if x.shape != (3, mask.padded_h, mask.padded_w):
        raise DimensionError(
            f"image {x.shape} vs padded mask {(3, mask.padded_h, mask.padded_w)}")
    w = cfg.window_size
    feat = nn.as_f32(x)
    for i in range(4):
        feat = nn.pixel_unshuffle(feat, 2)
        feat = conv1x1(feat, *rt.ga_down[i])
        grid = _stage_grid(mask, STAGE_STRIDES[i])
        for j, blk in enumerate(rt.ga_stages[i]):
            shift = 0 if j % 2 == 0 else w // 2
            feat = gi_swin_block(feat, grid, blk, w, shift, cfg.group_attention)
    return conv1x1(feat, *rt.ga_head)


def synthesis_transform(y_hat: np.ndarray, mask: GroupMask, rt: RuntimeModel) -> np.ndarray:
    """g_s: latents [M, H/16, W/16] -> image [3, image_h, image_w] in [0,1]."""
    cfg = rt.cfg
    expect = (cfg.latent_channels, mask.padded_h // 16, mask.padded_w // 16)
    if y_hat.shape != expect:
        raise DimensionError(f"latents {y_hat.shape}, config wants {expect}")
    w = cfg.window_size
    feat = conv1x1(nn.as_f32(y_hat), *rt.gs_embed)
    for i in range(4):
        k = 3 - i
        grid = _stage_grid(mask, STAGE_STRIDES[k])
        for j, blk in enumerate(rt.gs_stages[i]):
            shift = 0 if j % 2 == 0 else w // 2
            feat = gi_swin_block(feat, grid, blk, w, shift, cfg.group_attention)
        if k > 0:
            feat = nn.pixel_shuffle(conv1x1(feat, *rt.gs_up[i]), 2)
    out = nn.pixel_shuffle(conv1x1(feat, *rt.gs_out), 2)
    out = np.clip(out, 0.0, 1.0)
    return np.ascontiguousarray(out[:, :mask.image_h, :mask.image_w])


def hyper_analysis(y: np.ndarray, rt: RuntimeModel) -> np.ndarray:
    """h_a: latents -> hyper latents at a further /4; mixes groups freely."""
    w1, b1, w2, b2 = rt.ha
    z = nn.conv2d(y, w1, b1, stride=2, padding=1)
    return nn.conv2d(relu(z), w2, b2, stride=2, padding=1)


def hyper_synthesis(z_hat: np.ndarray, rt: RuntimeModel,
                    target_hw: tuple[int, int]) -> np.ndarray:
    """h_s: hyper latents -> per-cell entropy features [2M, h, w]."""
    w1, b1, w2, b2 = rt.hs
    f = nn.conv_transpose2d(z_hat, w1, b1, stride=2, padding=1, output_padding=1)
    f = nn.conv_transpose2d(relu(f), w2, b2, stride=2, padding=1, output_padding=1)
    th, tw = target_hw
    if f.shape[1] < th or f.shape[2] < tw:
        raise DimensionError(f"hyper features {f.shape} smaller than target {target_hw}")
    return np.ascontiguousarray(f[:, :th, :tw])
