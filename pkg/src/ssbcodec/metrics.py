"""Distortion and rate metrics over configurable regions of interest."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, SelectionError
from .groupmask import GroupMask

PSNR_INF = math.inf


@dataclass(frozen=True)
class RegionSpec:
    """Full image, a union of pixel bboxes, or a set of mask groups.

    Group regions resolve at block granularity, the mask's own resolution.
    """
    kind: str
    bboxes: tuple[tuple[int, int, int, int], ...] = ()
    group_ids: frozenset[int] = frozenset()

    @staticmethod
    def full() -> "RegionSpec":
        return RegionSpec(kind="full")

    @staticmethod
    def from_bboxes(boxes) -> "RegionSpec":
        return RegionSpec(kind="bboxes",
                          bboxes=tuple(tuple(int(v) for v in b) for b in boxes))

    @staticmethod
    def from_groups(ids) -> "RegionSpec":
        return RegionSpec(kind="groups", group_ids=frozenset(int(g) for g in ids))


def resolve_region(region: RegionSpec, height: int, width: int,
                   mask: GroupMask | None = None) -> np.ndarray:
    """Boolean pixel membership [height, width]; empty selections are errors."""
    if region.kind == "full":
        return np.ones((height, width), bool)
    if region.kind == "bboxes":
        sel = np.zeros((height, width), bool)
        for x, y, w, h in region.bboxes:
            if w <= 0 or h <= 0 or x < 0 or y < 0 \
                    or x + w > width or y + h > height:
                raise DimensionError(
                    f"bbox {(x, y, w, h)} outside {width}x{height}")
            sel[y:y + h, x:x + w] = True
        if not sel.any():
            raise SelectionError("bbox region is empty")
        return sel
    if region.kind == "groups":
        if mask is None:
            raise SelectionError("group region needs a mask")
        if (mask.image_h, mask.image_w) != (height, width):
            raise DimensionError(
                f"mask {(mask.image_h, mask.image_w)} vs image {(height, width)}")
        for g in region.group_ids:
            if not 0 <= g < mask.n_groups:
                raise SelectionError(f"group {g} outside [0, {mask.n_groups})")
        member = np.isin(mask.grid, list(region.group_ids))
        pix = np.repeat(np.repeat(member, mask.block_size, axis=0),
                        mask.block_size, axis=1)[:height, :width]
        if not pix.any():
            raise SelectionError(f"groups {sorted(region.group_ids)} cover no pixels")
        return pix
    raise SelectionError(f"unknown region kind {region.kind!r}")


def _check_pair(ref: np.ndarray, rec: np.ndarray) -> None:
    if ref.shape != rec.shape:
        raise DimensionError(f"image shapes differ: {ref.shape} vs {rec.shape}")
    if ref.ndim != 3 or ref.shape[0] != 3:
        raise DimensionError(f"expected [3, H, W] images, got {ref.shape}")
    if ref.dtype != np.uint8 or rec.dtype != np.uint8:
        raise DimensionError("metrics are defined on 8-bit images")


def mse(ref: np.ndarray, rec: np.ndarray,
        region: RegionSpec = RegionSpec.full(),
        mask: GroupMask | None = None) -> float:
    _check_pair(ref, rec)
    sel = resolve_region(region, ref.shape[1], ref.shape[2], mask)
    a = ref[:, sel].astype(np.float64)
    b = rec[:, sel].astype(np.float64)
    return float(((a - b) ** 2).mean())


def psnr(ref: np.ndarray, rec: np.ndarray,
         region: RegionSpec = RegionSpec.full(),
         mask: GroupMask | None = None) -> float:
    err = mse(ref, rec, region, mask)
    if err == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(255.0 ** 2 / err)


def bpp(bits: int, region: RegionSpec, height: int, width: int,
        mask: GroupMask | None = None) -> float:
    """Transmitted bits over the pixel count of the region of interest."""
    if bits < 0:
        raise DimensionError(f"negative bit count {bits}")
    sel = resolve_region(region, height, width, mask)
    return bits / float(sel.sum())
