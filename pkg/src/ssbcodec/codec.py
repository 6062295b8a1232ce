"""End-to-end encode and selective decode over the container format.

Coding conventions, shared by both directions:

- Latents are coded per group, slice-major, then raster order over the
  group's cells, then channel within the slice, as one range-coded
  substream per group.
- Every symbol is sent as residual = clamp(value - round(mu), +-bound)
  against the table whose scale is the smallest >= predicted sigma, so
  entropy parameters shape code length only and reconstruction stays
  bit-exact whenever no residual saturates (saturation is counted and
  reported).
- Hyper latents are coded channel-major in raster order under the
  per-channel factorized prior.
- An encrypted group's (residual, scale) pairs are permuted jointly per
  slice before coding; the key salt binds the permutation to this file.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rc
from .config import CodecConfig
from .container import SsbFile, extract_groups, read_ssb, write_ssb
from .entropy import (GaussianParams, charm_params, fp_params,
                      params_from_hyper, quantize, slice_ranges)
from .errors import (AvailabilityError, CompatibilityError, DimensionError,
                     FormatError, KeyRequiredError, SelectionError)
from .groupmask import GroupMask, deserialize_rle, downsample, serialize_rle
from .hashing import fnv1a64
from .permute import apply_permutation, invert_permutation, keyed_permutations
from .transform import (RuntimeModel, analysis_transform, hyper_analysis,
                        hyper_synthesis, synthesis_transform)


@dataclass(frozen=True)
class EncodeReport:
    total_bytes: int
    shared_bits: int
    per_group_bits: dict[int, int]
    estimated_bits: dict[int, float]
    clamp_events: int
    bpp: float


@dataclass(frozen=True)
class DecodeReport:
    decoded_ids: list[int]
    shared_bits: int
    per_group_bits: dict[int, int]
    keyless_ids: list[int] = field(default_factory=list)


def pad_image(x: np.ndarray, mask: GroupMask) -> np.ndarray:
    """Edge-replicate [3, H, W] up to the mask's padded dimensions."""
    if x.shape != (3, mask.image_h, mask.image_w):
        raise DimensionError(
            f"image {x.shape} vs mask {(3, mask.image_h, mask.image_w)}")
    return np.pad(x, ((0, 0), (0, mask.padded_h - x.shape[1]),
                      (0, mask.padded_w - x.shape[2])), mode="edge")


def image_to_float(image: np.ndarray) -> np.ndarray:
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[0] != 3:
        raise DimensionError(
            f"expected uint8 [3, H, W] image, got {image.dtype} {image.shape}")
    return image.astype(np.float32) / np.float32(255.0)


def float_to_image(x: np.ndarray) -> np.ndarray:
    scaled = quantize(np.asarray(x, np.float32) * np.float32(255.0))
    return np.clip(scaled, 0, 255).astype(np.uint8)


def _conv_half(n: int) -> int:
    return (n + 1) // 2


def hyper_shape(cfg: CodecConfig, h16: int, w16: int) -> tuple[int, int, int]:
    return (cfg.hyper_channels, _conv_half(_conv_half(h16)),
            _conv_half(_conv_half(w16)))


class _Coding:
    """Tables and spans shared by one encode or decode pass."""

    def __init__(self, rt: RuntimeModel):
        self.rt = rt
        self.cfg = rt.cfg
        self.scales = rc.scale_table(rt.cfg.sigma_min)
        self.tables = rc.build_cdf_tables(self.scales, rt.cfg.symbol_bound,
                                          rt.cfg.cdf_precision)
        self.spans = slice_ranges(rt.cfg)
        self.bound = rt.cfg.symbol_bound

    def slice_params(self, hyper_feat: np.ndarray, context: np.ndarray,
                     s: int, start: int) -> GaussianParams:
        if self.cfg.charm_enabled:
            return charm_params(hyper_feat, context[:start], self.rt, s)
        return params_from_hyper(hyper_feat, self.cfg)

    def table_bits(self, residuals: np.ndarray, idx: np.ndarray) -> float:
        """Sum of -log2 p under the coder's own quantized tables; the range
        coder's output length tracks this within its documented overhead."""
        col = residuals + self.bound
        freq = (self.tables[idx, col + 1] - self.tables[idx, col]).astype(np.float64)
        return float((self.cfg.cdf_precision - np.log2(freq)).sum())


def _group_cells(grid16: np.ndarray, g: int) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.nonzero(grid16 == g)
    return rows, cols


def _gather(t: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """[C, h, w] at the given cells -> flat [n_cells * C], cell-major."""
    return np.ascontiguousarray(t[:, rows, cols].T).reshape(-1)


def _scatter(flat: np.ndarray, t: np.ndarray, rows: np.ndarray,
             cols: np.ndarray) -> None:
    t[:, rows, cols] = flat.reshape(rows.size, t.shape[0]).T


def derive_salt(mask_rle: bytes, z_stream: bytes, group_id: int) -> int:
    """Per-file permutation salt; content-derived so encoding is
    deterministic while different files still get different streams."""
    return fnv1a64(mask_rle + z_stream + struct.pack("<H", group_id))


def _encode_group(cod: _Coding, g: int, grid16: np.ndarray,
                  y_hat: np.ndarray, hyper_feat: np.ndarray,
                  key: bytes | None, salt: int):
    rows, cols = _group_cells(grid16, g)
    seqs = []
    for s, (start, end) in enumerate(cod.spans):
        params = cod.slice_params(hyper_feat, y_hat, s, start)
        seqs.append((_gather(y_hat[start:end], rows, cols),
                     _gather(params.mu, rows, cols),
                     _gather(params.sigma, rows, cols)))

    perms = None
    if key is not None:
        perms = keyed_permutations(key, g, salt, [s[0].size for s in seqs])
    enc = rc.RangeEncoder(cod.cfg.cdf_precision)
    est_bits = 0.0
    clamped = 0
    for s, (sym, mu, sigma) in enumerate(seqs):
        idx = rc.scale_index(sigma, cod.scales)
        raw = sym - quantize(mu)
        resid = np.clip(raw, -cod.bound, cod.bound).astype(np.int32)
        clamped += int((raw != resid).sum())
        est_bits += cod.table_bits(resid, idx)
        if perms is not None:
            resid, idx = apply_permutation(perms[s], resid, idx)
        rc.encode_block(enc, resid, idx, cod.tables, cod.bound)
    return enc.finish(), est_bits, clamped


def encode_image(image: np.ndarray, mask: GroupMask, rt: RuntimeModel, *,
                 encrypt_keys: dict[int, bytes] | None = None,
                 max_workers: int = 1) -> tuple[bytes, EncodeReport]:
    """Full pipeline: transform, quantize, per-group entropy code, pack."""
    encrypt_keys = encrypt_keys or {}
    cfg = rt.cfg
    cod = _Coding(rt)
    for g in encrypt_keys:
        if not 0 <= g < mask.n_groups:
            raise SelectionError(f"encryption key for unknown group {g}")

    x = pad_image(image_to_float(image), mask)
    y = analysis_transform(x, mask, rt)
    y_hat = quantize(y)
    z_hat = quantize(hyper_analysis(y, rt))

    fp = fp_params(rt, z_hat.shape[1:])
    fp_idx = rc.scale_index(fp.sigma.reshape(-1), cod.scales)
    fp_round = quantize(fp.mu)
    z_raw = z_hat.reshape(-1) - fp_round.reshape(-1)
    z_resid = np.clip(z_raw, -cod.bound, cod.bound).astype(np.int32)
    clamp_events = int((z_raw != z_resid).sum())
    z_stream = rc.encode_symbols(z_resid, fp_idx, cod.tables, cod.bound,
                                 cod.cfg.cdf_precision)

    mask_rle = serialize_rle(mask)
    grid16 = downsample(mask, 16).astype(np.int32)
    hyper_feat = hyper_synthesis(z_hat.astype(np.float32), rt, y.shape[1:])

    salts = {g: derive_salt(mask_rle, z_stream, g) for g in encrypt_keys}

    def work(g: int):
        return _encode_group(cod, g, grid16, y_hat, hyper_feat,
                             encrypt_keys.get(g), salts.get(g, 0))

    ids = list(range(mask.n_groups))
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(work, ids))
    else:
        results = [work(g) for g in ids]

    substreams = [r[0] for r in results]
    estimated = {g: results[g][1] for g in ids}
    clamp_events += sum(r[2] for r in results)

    data = write_ssb(
        image_h=mask.image_h, image_w=mask.image_w, block_size=mask.block_size,
        n_groups=mask.n_groups, latent_channels=cfg.latent_channels,
        slices=cfg.slices, weights_digest=rt.digest, mask_rle=mask_rle,
        z_stream=z_stream, substreams=substreams, encryption=salts,
        gi_disabled=not cfg.group_attention,
        charm_disabled=not cfg.charm_enabled)

    shared_bits = 8 * (len(data) - sum(len(s) for s in substreams))
    report = EncodeReport(
        total_bytes=len(data), shared_bits=shared_bits,
        per_group_bits={g: 8 * len(substreams[g]) for g in ids},
        estimated_bits=estimated, clamp_events=clamp_events,
        bpp=8.0 * len(data) / (mask.image_h * mask.image_w))
    return data, report


def _check_file_against_model(file: SsbFile, rt: RuntimeModel) -> None:
    cfg = rt.cfg
    if file.weights_digest != rt.digest:
        raise CompatibilityError(
            f"file wants weights {file.weights_digest:016x}, "
            f"loaded {rt.digest:016x}")
    mismatches = []
    if file.latent_channels != cfg.latent_channels:
        mismatches.append("latent channels")
    if file.slices != cfg.slices:
        mismatches.append("slice count")
    if file.charm_disabled == cfg.charm_enabled:
        mismatches.append("charm flag")
    if file.gi_disabled == cfg.group_attention:
        mismatches.append("group attention flag")
    if mismatches:
        raise CompatibilityError(
            "file/config mismatch: " + ", ".join(mismatches))


def _decode_mask(file: SsbFile) -> GroupMask:
    mask = deserialize_rle(file.mask_rle)
    if (mask.image_h, mask.image_w) != (file.image_h, file.image_w) \
            or mask.block_size != file.block_size \
            or mask.n_groups != file.n_groups:
        raise FormatError("mask segment disagrees with the header")
    return mask


def _decode_z(cod: _Coding, file: SsbFile, h16: int, w16: int) -> np.ndarray:
    shape = hyper_shape(cod.cfg, h16, w16)
    fp = fp_params(cod.rt, shape[1:])
    fp_idx = rc.scale_index(fp.sigma.reshape(-1), cod.scales)
    count = int(np.prod(shape))
    resid = rc.decode_symbols(file.z_stream, fp_idx, count, cod.tables,
                              cod.bound, cod.cfg.cdf_precision)
    return (resid + quantize(fp.mu).reshape(-1)).reshape(shape).astype(np.int32)


def _decode_group(cod: _Coding, file: SsbFile, g: int, grid16: np.ndarray,
                  hyper_feat: np.ndarray, key: bytes | None) -> np.ndarray:
    """Entropy-decode one group into a zero-filled latent canvas."""
    record = file.record_for(g)
    rows, cols = _group_cells(grid16, g)
    m = cod.cfg.latent_channels
    y_local = np.zeros((m, grid16.shape[0], grid16.shape[1]), np.int32)
    dec = rc.RangeDecoder(file.substream(g), cod.cfg.cdf_precision)
    perms = None
    if record.encrypted and key is not None:
        widths = [(end - start) * rows.size for start, end in cod.spans]
        perms = keyed_permutations(key, g, record.key_salt, widths)
    for s, (start, end) in enumerate(cod.spans):
        params = cod.slice_params(hyper_feat, y_local, s, start)
        mu = _gather(params.mu, rows, cols)
        sigma = _gather(params.sigma, rows, cols)
        idx = rc.scale_index(sigma, cod.scales)
        if perms is not None:
            (idx_coded,) = apply_permutation(perms[s], idx)
            resid = rc.decode_block(dec, idx_coded, cod.tables, cod.bound)
            (resid,) = apply_permutation(invert_permutation(perms[s]), resid)
        else:
            resid = rc.decode_block(dec, idx, cod.tables, cod.bound)
        values = resid + quantize(mu)
        _scatter(values, y_local[start:end], rows, cols)
    return y_local


def decode_latents(data: bytes, selection, rt: RuntimeModel, *,
                   keys: dict[int, bytes] | None = None,
                   strict_keys: bool = False, max_workers: int = 1):
    """Entropy-decode the selected groups.

    Returns (latents [M, h16, w16] with absent groups zero-filled, mask,
    parsed file, DecodeReport).  Encrypted groups decode without a key to
    garbage values rather than failing, unless strict_keys is set.
    """
    keys = keys or {}
    file = read_ssb(data)
    _check_file_against_model(file, rt)
    mask = _decode_mask(file)
    cod = _Coding(rt)

    wanted = sorted(set(int(g) for g in selection))
    if not wanted:
        raise SelectionError("decode needs a non-empty group selection")
    for g in wanted:
        if not 0 <= g < file.n_groups:
            raise SelectionError(f"group {g} outside [0, {file.n_groups})")
        if file.record_for(g) is None:
            raise AvailabilityError(
                f"group {g} was not transmitted in this file")

    keyless = [g for g in wanted
               if file.record_for(g).encrypted and g not in keys]
    if strict_keys and keyless:
        raise KeyRequiredError(
            f"groups {keyless} are encrypted and no key was given")

    h16, w16 = mask.padded_h // 16, mask.padded_w // 16
    grid16 = downsample(mask, 16).astype(np.int32)
    z_hat = _decode_z(cod, file, h16, w16)
    hyper_feat = hyper_synthesis(z_hat.astype(np.float32), rt, (h16, w16))

    def work(g: int) -> np.ndarray:
        return _decode_group(cod, file, g, grid16, hyper_feat, keys.get(g))

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            partials = list(pool.map(work, wanted))
    else:
        partials = [work(g) for g in wanted]

    y_hat = np.zeros((cod.cfg.latent_channels, h16, w16), np.int32)
    for g, y_local in zip(wanted, partials):
        cells = grid16 == g
        y_hat[:, cells] = y_local[:, cells]

    report = DecodeReport(
        decoded_ids=wanted,
        shared_bits=8 * (len(data) - len(file.blob)),
        per_group_bits={g: 8 * file.record_for(g).length for g in wanted},
        keyless_ids=keyless)
    return y_hat, mask, file, report


def decode_groups(data: bytes, selection, rt: RuntimeModel, *,
                  keys: dict[int, bytes] | None = None,
                  strict_keys: bool = False,
                  max_workers: int = 1) -> tuple[np.ndarray, DecodeReport]:
    """Selective reconstruction: uint8 image plus the bit report."""
    y_hat, mask, _, report = decode_latents(
        data, selection, rt, keys=keys, strict_keys=strict_keys,
        max_workers=max_workers)
    x = synthesis_transform(y_hat.astype(np.float32), mask, rt)
    return float_to_image(x), report


__all__ = ["EncodeReport", "DecodeReport", "encode_image", "decode_latents",
           "decode_groups", "extract_groups", "pad_image", "image_to_float",
           "float_to_image", "derive_salt", "hyper_shape"]
