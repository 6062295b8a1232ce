"""Differentiable mirror of the codec's transforms and entropy model.

The forward pass tracks the codec op for op: pixel shuffle resampling
around windowed attention whose windows are additionally split by the
group mask, a strided hyper path, and position-wise slice prediction.
Disallowed attention pairs get an additive -1e9 score, which underflows
to an exact zero weight after softmax, so group independence holds here
just as it does in the codec.

Inputs are restricted to exact multiples of the block size; the codec's
padding of ragged images is an inference concern, not a training one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ssbcodec import CodecConfig, CompatibilityError, DimensionError

from .loss import noisy_gaussian_bits
from .sswt import weight_manifest

# Group id for padding tokens; real ids stop at 65534.
SENTINEL = 0xFFFF
MASK_FILL = -1e9
STAGE_STRIDES = (2, 4, 8, 16)
TOTAL_STRIDE = 16


def relative_position_index(w: int) -> np.ndarray:
    """[w*w, w*w] indices into a (2w-1)^2 bias table, standard layout."""
    coords = np.stack(np.meshgrid(np.arange(w), np.arange(w), indexing="ij"))
    flat = coords.reshape(2, -1)
    rel = flat[:, :, None] - flat[:, None, :] + (w - 1)
    return rel[0] * (2 * w - 1) + rel[1]


def _shift_regions(hp: int, wp: int, w: int, shift: int) -> np.ndarray:
    """Label each cell of the rolled canvas with its pre-shift sub-window region."""
    region = np.zeros((hp, wp), dtype=np.int64)
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


def _window_masks(grid: np.ndarray, w: int, shift: int,
                  group_attention: bool) -> torch.Tensor:
    """Additive [nw, w*w, w*w] masks for one padded, rolled id grid."""
    hp, wp = grid.shape
    region = _shift_regions(hp, wp, w, shift)
    nh, nw_ = hp // w, wp // w
    n = w * w
    gwin = grid.reshape(nh, w, nw_, w).transpose(0, 2, 1, 3).reshape(nh * nw_, n)
    rwin = region.reshape(nh, w, nw_, w).transpose(0, 2, 1, 3).reshape(nh * nw_, n)
    allow = rwin[:, :, None] == rwin[:, None, :]
    if group_attention:
        allow &= gwin[:, :, None] == gwin[:, None, :]
    pad = gwin == SENTINEL
    allow &= ~(pad[:, :, None] | pad[:, None, :])
    idx = np.arange(n)
    allow[:, idx, idx] = True
    return torch.from_numpy(np.where(allow, 0.0, MASK_FILL).astype(np.float32))


def _partition(feat: torch.Tensor, grid: np.ndarray, w: int, shift: int,
               group_attention: bool):
    """[C, H, W] -> (tokens [nw, w*w, C], additive masks, layout dims)."""
    c, h, wd = feat.shape
    hp = ((h + w - 1) // w) * w
    wp = ((wd + w - 1) // w) * w
    padded = np.full((hp, wp), SENTINEL, dtype=np.int64)
    padded[:h, :wd] = grid
    x = F.pad(feat, (0, wp - wd, 0, hp - h))
    if shift:
        x = torch.roll(x, (-shift, -shift), dims=(1, 2))
        padded = np.roll(padded, (-shift, -shift), axis=(0, 1))
    masks = _window_masks(padded, w, shift, group_attention)
    nh, nw_ = hp // w, wp // w
    tokens = x.reshape(c, nh, w, nw_, w).permute(1, 3, 2, 4, 0).reshape(nh * nw_, w * w, c)
    return tokens, masks, (h, wd, hp, wp)


def _unpartition(tokens: torch.Tensor, dims, w: int, shift: int) -> torch.Tensor:
    h, wd, hp, wp = dims
    nh, nw_ = hp // w, wp // w
    c = tokens.shape[-1]
    x = tokens.reshape(nh, nw_, w, w, c).permute(4, 0, 2, 1, 3).reshape(c, hp, wp)
    if shift:
        x = torch.roll(x, (shift, shift), dims=(1, 2))
    return x[:, :h, :wd]


def _conv1x1(x: torch.Tensor, w: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return torch.einsum("oi,ihw->ohw", w, x) + b[:, None, None]


def round_half_away(t: torch.Tensor) -> torch.Tensor:
    """Round half away from zero, the codec's quantizer."""
    return torch.sign(t) * torch.floor(torch.abs(t) + 0.5)


def round_ste(t: torch.Tensor) -> torch.Tensor:
    """Rounded values forward, identity gradient backward."""
    return t + (round_half_away(t) - t).detach()


def _fan_in(name: str, shape: tuple) -> int:
    if len(shape) == 2:
        return shape[1]
    if len(shape) == 4:
        if name.startswith("hs."):
            return shape[0] * shape[2] * shape[3]
        return shape[1] * shape[2] * shape[3]
    return shape[0]


def init_tensors(cfg: CodecConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Seeded random tensors, the same scheme and draw order the codec uses,
    so a (config, seed) pair names one starting point in both packages."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in weight_manifest(cfg).items():
        if name.endswith("ln1.g") or name.endswith("ln2.g"):
            t = np.ones(shape, np.float32)
        elif name == "fp.mu":
            t = np.zeros(shape, np.float32)
        elif name == "fp.sigma_raw":
            t = np.full(shape, 0.5, np.float32)
        elif name.endswith(".b"):
            t = np.zeros(shape, np.float32)
        elif name.endswith("rel_bias"):
            t = (rng.standard_normal(shape) * 0.02).astype(np.float32)
        else:
            scale = 1.0 / np.sqrt(_fan_in(name, shape))
            t = (rng.standard_normal(shape) * scale).astype(np.float32)
            if name == "ga.head.w":
                # keep untrained latents straddling the rounding boundary
                t *= 4.0
        tensors[name] = t
    return tensors


@dataclass(frozen=True)
class ForwardOutputs:
    x_hat: torch.Tensor
    rate_bits: torch.Tensor
    latent_bits: torch.Tensor
    hyper_bits: torch.Tensor
    y: torch.Tensor


def _attr(name: str) -> str:
    return name.replace(".", "__")


class CodecModel(nn.Module):
    """Every codec tensor as a trainable parameter, plus the forward passes.

    Group masks enter as block-resolution integer grids (one id per block,
    ids below 65535); images must measure an exact multiple of the block
    size on both axes.
    """

    def __init__(self, cfg: CodecConfig,
                 tensors: dict[str, np.ndarray] | None = None, seed: int = 0):
        super().__init__()
        self.cfg = cfg.validate()
        self.manifest = weight_manifest(cfg)
        if tensors is None:
            tensors = init_tensors(cfg, seed)
        missing = self.manifest.keys() - tensors.keys()
        extra = tensors.keys() - self.manifest.keys()
        if missing or extra:
            raise CompatibilityError(
                f"tensor names do not match config (missing {sorted(missing)[:3]}, "
                f"extra {sorted(extra)[:3]})")
        for name, shape in self.manifest.items():
            arr = np.ascontiguousarray(tensors[name], dtype=np.float32)
            if tuple(arr.shape) != shape:
                raise CompatibilityError(f"{name}: shape {tuple(arr.shape)}, "
                                         f"config wants {shape}")
            self.register_parameter(_attr(name), nn.Parameter(torch.from_numpy(arr.copy())))
        self.register_buffer(
            "rel_index",
            torch.from_numpy(relative_position_index(cfg.window_size).reshape(-1)).long(),
            persistent=False)
        spans = []
        start = 0
        for width in cfg.slice_widths():
            spans.append((start, start + width))
            start += width
        self.spans = spans

    def p(self, name: str) -> torch.Tensor:
        return getattr(self, _attr(name))

    def export_tensors(self) -> dict[str, np.ndarray]:
        """Detached float32 copies in manifest order."""
        return {name: self.p(name).detach().numpy().copy() for name in self.manifest}

    # transforms

    def _attention(self, x: torch.Tensor, add_mask: torch.Tensor,
                   prefix: str, heads: int) -> torch.Tensor:
        nw, n, d = x.shape
        dh = d // heads

        def split(v):
            return v.reshape(nw, n, heads, dh).permute(0, 2, 1, 3)

        q = split(F.linear(x, self.p(prefix + "attn.wq"), self.p(prefix + "attn.bq")))
        k = split(F.linear(x, self.p(prefix + "attn.wk"), self.p(prefix + "attn.bk")))
        v = split(F.linear(x, self.p(prefix + "attn.wv"), self.p(prefix + "attn.bv")))
        scores = torch.matmul(q, k.transpose(-1, -2)) * (1.0 / math.sqrt(dh))
        bias = self.p(prefix + "attn.rel_bias")[self.rel_index].reshape(n, n, heads)
        scores = scores + bias.permute(2, 0, 1)[None]
        scores = scores + add_mask[:, None]
        attn = torch.softmax(scores, dim=-1)
        ctx = torch.matmul(attn, v).permute(0, 2, 1, 3).reshape(nw, n, d)
        return F.linear(ctx, self.p(prefix + "attn.wo"), self.p(prefix + "attn.bo"))

    def _block(self, feat: torch.Tensor, grid: np.ndarray, prefix: str,
               heads: int, shift: int) -> torch.Tensor:
        w = self.cfg.window_size
        tokens, add_mask, dims = _partition(feat, grid, w, shift,
                                            self.cfg.group_attention)
        x = tokens
        h = F.layer_norm(x, x.shape[-1:], self.p(prefix + "ln1.g"),
                         self.p(prefix + "ln1.b"), eps=1e-5)
        x = x + self._attention(h, add_mask, prefix, heads)
        h = F.layer_norm(x, x.shape[-1:], self.p(prefix + "ln2.g"),
                         self.p(prefix + "ln2.b"), eps=1e-5)
        h = F.gelu(F.linear(h, self.p(prefix + "mlp.fc1.w"), self.p(prefix + "mlp.fc1.b")),
                   approximate="tanh")
        x = x + F.linear(h, self.p(prefix + "mlp.fc2.w"), self.p(prefix + "mlp.fc2.b"))
        return _unpartition(x, dims, w, shift)

    def _stage_grids(self, block_grid: np.ndarray) -> list[np.ndarray]:
        grid = np.asarray(block_grid, dtype=np.int64)
        if grid.ndim != 2:
            raise DimensionError(f"block grid must be 2-D, got rank {grid.ndim}")
        B = self.cfg.block_size
        return [np.repeat(np.repeat(grid, B // s, axis=0), B // s, axis=1)
                for s in STAGE_STRIDES]

    def analysis(self, x: torch.Tensor, block_grid: np.ndarray) -> torch.Tensor:
        """g_a: [3, H, W] in [0, 1] -> latents [M, H/16, W/16]."""
        cfg = self.cfg
        grids = self._stage_grids(block_grid)
        gh, gw = np.asarray(block_grid).shape
        expect = (3, gh * cfg.block_size, gw * cfg.block_size)
        if tuple(x.shape) != expect:
            raise DimensionError(f"image {tuple(x.shape)} vs block grid {expect}")
        w = cfg.window_size
        feat = x
        for i in range(4):
            feat = F.pixel_unshuffle(feat, 2)
            feat = _conv1x1(feat, self.p(f"ga.down{i}.w"), self.p(f"ga.down{i}.b"))
            for j in range(cfg.depths[i]):
                shift = 0 if j % 2 == 0 else w // 2
                feat = self._block(feat, grids[i], f"ga.s{i}.b{j}.", cfg.heads[i], shift)
        return _conv1x1(feat, self.p("ga.head.w"), self.p("ga.head.b"))

    def synthesis(self, y: torch.Tensor, block_grid: np.ndarray,
                  clamp: bool = False) -> torch.Tensor:
        """g_s: latents [M, H/16, W/16] -> image [3, H, W]; clamp for eval."""
        cfg = self.cfg
        grids = self._stage_grids(block_grid)
        gh, gw = np.asarray(block_grid).shape
        scale = cfg.block_size // TOTAL_STRIDE
        expect = (cfg.latent_channels, gh * scale, gw * scale)
        if tuple(y.shape) != expect:
            raise DimensionError(f"latents {tuple(y.shape)}, config wants {expect}")
        w = cfg.window_size
        feat = _conv1x1(y, self.p("gs.embed.w"), self.p("gs.embed.b"))
        for i in range(4):
            k = 3 - i
            for j in range(cfg.depths[k]):
                shift = 0 if j % 2 == 0 else w // 2
                feat = self._block(feat, grids[k], f"gs.s{i}.b{j}.", cfg.heads[k], shift)
            if k > 0:
                feat = F.pixel_shuffle(
                    _conv1x1(feat, self.p(f"gs.up{i}.w"), self.p(f"gs.up{i}.b")), 2)
        out = F.pixel_shuffle(_conv1x1(feat, self.p("gs.out.w"), self.p("gs.out.b")), 2)
        if clamp:
            out = torch.clamp(out, 0.0, 1.0)
        return out

    def hyper_analysis(self, y: torch.Tensor) -> torch.Tensor:
        z = F.conv2d(y[None], self.p("ha.c1.w"), self.p("ha.c1.b"),
                     stride=2, padding=1)
        z = F.conv2d(F.relu(z), self.p("ha.c2.w"), self.p("ha.c2.b"),
                     stride=2, padding=1)
        return z[0]

    def hyper_synthesis(self, z: torch.Tensor, target_hw) -> torch.Tensor:
        f = F.conv_transpose2d(z[None], self.p("hs.d1.w"), self.p("hs.d1.b"),
                               stride=2, padding=1, output_padding=1)
        f = F.conv_transpose2d(F.relu(f), self.p("hs.d2.w"), self.p("hs.d2.b"),
                               stride=2, padding=1, output_padding=1)
        th, tw = target_hw
        return f[0, :, :th, :tw]

    # entropy parameters

    def factorized_params(self, shape_hw) -> tuple[torch.Tensor, torch.Tensor]:
        h, w = shape_hw
        mu = self.p("fp.mu")[:, None, None].expand(-1, h, w)
        sigma = self.cfg.sigma_min + F.softplus(self.p("fp.sigma_raw"))
        return mu, sigma[:, None, None].expand(-1, h, w)

    def slice_params(self, hyper_feat: torch.Tensor, context: torch.Tensor,
                     s: int) -> tuple[torch.Tensor, torch.Tensor]:
        """Per-cell (mu, sigma) of slice s given decoder-side earlier slices."""
        cfg = self.cfg
        start, end = self.spans[s]
        if not cfg.charm_enabled:
            m = cfg.latent_channels
            return hyper_feat[:m], cfg.sigma_min + F.softplus(hyper_feat[m:])
        feat = torch.cat([hyper_feat, context[:start]], dim=0)
        h = F.relu(_conv1x1(feat, self.p(f"charm.s{s}.fc1.w"), self.p(f"charm.s{s}.fc1.b")))
        out = _conv1x1(h, self.p(f"charm.s{s}.fc2.w"), self.p(f"charm.s{s}.fc2.b"))
        width = end - start
        return out[:width], cfg.sigma_min + F.softplus(out[width:])

    # end to end

    def training_forward(self, x: torch.Tensor, block_grid: np.ndarray,
                         gen: torch.Generator) -> ForwardOutputs:
        """One relaxed pass: rate from noised symbols, distortion from a
        rounded decoder input whose rounding carries no gradient."""
        y = self.analysis(x, block_grid)
        z = self.hyper_analysis(y)

        z_noise = z + (torch.rand(z.shape, generator=gen) - 0.5)
        fp_mu, fp_sigma = self.factorized_params(z.shape[1:])
        hyper_bits = noisy_gaussian_bits(z_noise, fp_mu, fp_sigma).sum()

        hyper_feat = self.hyper_synthesis(round_ste(z), y.shape[1:])
        y_dec = round_ste(y)
        y_noise = y + (torch.rand(y.shape, generator=gen) - 0.5)
        latent_bits = y.new_zeros(())
        for s, (start, end) in enumerate(self.spans):
            mu, sigma = self.slice_params(hyper_feat, y_dec, s)
            latent_bits = latent_bits + noisy_gaussian_bits(
                y_noise[start:end], mu, sigma).sum()

        x_hat = self.synthesis(y_dec, block_grid, clamp=False)
        return ForwardOutputs(x_hat=x_hat, rate_bits=latent_bits + hyper_bits,
                              latent_bits=latent_bits, hyper_bits=hyper_bits, y=y)
