"""Block-wise group masks: construction from annotations, downsampling, RLE.

The mask assigns every block of the padded image to one group id.  Group 0
is the background and is an ordinary group: compressed, transmittable and
droppable like any other.  When annotations cover every block, id 0 stays
reserved but unused so object ids never shift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AnnotationError, CapacityError, DimensionError, FormatError

MAX_GROUPS = 65535

MERGE_OVERLAPS = "merge_overlaps"
SEPARATE = "separate"


@dataclass(frozen=True)
class Region:
    region_id: int
    label: str
    # exactly one of the two is set
    bbox: tuple[int, int, int, int] | None = None  # x, y, w, h in pixels
    bitmap: np.ndarray | None = None               # bool [height, width]


@dataclass(frozen=True)
class AnnotationSet:
    width: int
    height: int
    regions: tuple[Region, ...]


@dataclass(frozen=True)
class GroupMask:
    image_h: int
    image_w: int
    padded_h: int
    padded_w: int
    block_size: int
    grid: np.ndarray  # uint16 [padded_h/B, padded_w/B]
    n_groups: int

    @property
    def grid_h(self) -> int:
        return self.padded_h // self.block_size

    @property
    def grid_w(self) -> int:
        return self.padded_w // self.block_size


@dataclass(frozen=True)
class GroupIndicator:
    group_id: int
    selector: np.ndarray  # bool, grid-shaped


def _pad_up(v: int, b: int) -> int:
    return ((v + b - 1) // b) * b


def load_annotations(doc: dict) -> AnnotationSet:
    """Build an AnnotationSet from a parsed annotation document."""
    try:
        width = int(doc["width"])
        height = int(doc["height"])
        raw_regions = doc["regions"]
    except (KeyError, TypeError, ValueError) as exc:
        raise AnnotationError(f"annotation document missing field: {exc}") from exc
    if width <= 0 or height <= 0:
        raise AnnotationError(f"bad annotation size {width}x{height}")
    regions = []
    seen = set()
    for r in raw_regions:
        try:
            rid = int(r["region_id"])
            label = str(r.get("label", ""))
        except (KeyError, TypeError, ValueError) as exc:
            raise AnnotationError(f"bad region entry: {exc}") from exc
        if rid < 0:
            raise AnnotationError(f"negative region_id {rid}")
        if rid in seen:
            raise AnnotationError(f"duplicate region_id {rid}")
        seen.add(rid)
        if "bbox" in r:
            x, y, w, h = (int(v) for v in r["bbox"])
            if w <= 0 or h <= 0:
                raise AnnotationError(f"region {rid}: empty bbox")
            if x < 0 or y < 0 or x + w > width or y + h > height:
                raise AnnotationError(f"region {rid}: bbox out of bounds")
            regions.append(Region(rid, label, bbox=(x, y, w, h)))
        elif "rle_mask" in r:
            rle = r["rle_mask"]
            try:
                mh, mw = (int(v) for v in rle["size"])
                counts = [int(v) for v in rle["counts"]]
            except (KeyError, TypeError, ValueError) as exc:
                raise AnnotationError(f"region {rid}: bad rle_mask: {exc}") from exc
            if (mh, mw) != (height, width):
                raise AnnotationError(
                    f"region {rid}: rle size {mh}x{mw} != image {height}x{width}")
            if any(c < 0 for c in counts) or sum(counts) != mh * mw:
                raise AnnotationError(f"region {rid}: rle counts do not cover image")
            flat = np.zeros(mh * mw, dtype=bool)
            pos = 0
            val = False  # counts alternate runs of 0s then 1s, row-major
            for c in counts:
                if val:
                    flat[pos:pos + c] = True
                pos += c
                val = not val
            bitmap = flat.reshape(mh, mw)
            if not bitmap.any():
                raise AnnotationError(f"region {rid}: empty bitmap")
            regions.append(Region(rid, label, bitmap=bitmap))
        else:
            raise AnnotationError(f"region {rid}: no geometry")
    return AnnotationSet(width=width, height=height, regions=tuple(regions))


def _block_coverage(region: Region, ann: AnnotationSet, B: int,
                    gh: int, gw: int) -> dict[tuple[int, int], int]:
    """Covered blocks -> count of covered pixels inside that block."""
    cover: dict[tuple[int, int], int] = {}
    if region.bbox is not None:
        x, y, w, h = region.bbox
        for br in range(y // B, (y + h - 1) // B + 1):
            for bc in range(x // B, (x + w - 1) // B + 1):
                oy = min(y + h, (br + 1) * B) - max(y, br * B)
                ox = min(x + w, (bc + 1) * B) - max(x, bc * B)
                if oy > 0 and ox > 0:
                    cover[(br, bc)] = oy * ox
    else:
        bm = region.bitmap
        padded = np.zeros((gh * B, gw * B), dtype=bool)
        padded[:ann.height, :ann.width] = bm
        counts = padded.reshape(gh, B, gw, B).sum(axis=(1, 3))
        for br, bc in zip(*np.nonzero(counts)):
            cover[(int(br), int(bc))] = int(counts[br, bc])
    return cover


def build_mask(ann: AnnotationSet, B: int, policy: str = MERGE_OVERLAPS,
               stride: int = 1) -> GroupMask:
    """Rasterize annotations onto the block grid.

    merge_overlaps: regions whose block sets touch are transitively merged
    into one group; groups are numbered by the smallest region_id they
    contain.  separate: every region keeps its own group; a contested block
    goes to the region with the largest pixel overlap there, ties to the
    smaller region_id.  Regions that end up with no blocks are dropped.
    """
    if B <= 0 or (stride > 0 and B % stride):
        raise DimensionError(f"block size {B} not a positive multiple of stride {stride}")
    if policy not in (MERGE_OVERLAPS, SEPARATE):
        raise AnnotationError(f"unknown policy {policy!r}")
    padded_h = _pad_up(ann.height, B)
    padded_w = _pad_up(ann.width, B)
    gh, gw = padded_h // B, padded_w // B
    grid = np.zeros((gh, gw), dtype=np.uint16)

    regions = sorted(ann.regions, key=lambda r: r.region_id)
    coverage = [(r.region_id, _block_coverage(r, ann, B, gh, gw)) for r in regions]
    coverage = [(rid, cov) for rid, cov in coverage if cov]

    if policy == MERGE_OVERLAPS:
        parent = {rid: rid for rid, _ in coverage}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        owner: dict[tuple[int, int], int] = {}
        for rid, cov in coverage:
            for blk in cov:
                if blk in owner:
                    ra, rb = find(owner[blk]), find(rid)
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)
                else:
                    owner[blk] = rid
        roots = sorted({find(rid) for rid, _ in coverage})
        group_of = {rid: roots.index(find(rid)) + 1 for rid, _ in coverage}
        blocks_of: dict[int, set] = {}
        for rid, cov in coverage:
            blocks_of.setdefault(group_of[rid], set()).update(cov)
    else:
        best: dict[tuple[int, int], tuple[int, int]] = {}  # block -> (count, rid)
        for rid, cov in coverage:  # ascending rid: ties keep the earlier one
            for blk, cnt in cov.items():
                if blk not in best or cnt > best[blk][0]:
                    best[blk] = (cnt, rid)
        winners: dict[int, set] = {}
        for blk, (_, rid) in best.items():
            winners.setdefault(rid, set()).add(blk)
        kept = sorted(winners)  # eclipsed regions vanish; renumber the rest
        blocks_of = {kept.index(rid) + 1: winners[rid] for rid in kept}

    n_groups = 1 + len(blocks_of)
    if n_groups > MAX_GROUPS:
        raise CapacityError(f"{n_groups} groups exceed the u16 limit")
    for gid, blocks in blocks_of.items():
        for br, bc in blocks:
            grid[br, bc] = gid
    return GroupMask(image_h=ann.height, image_w=ann.width,
                     padded_h=padded_h, padded_w=padded_w,
                     block_size=B, grid=grid, n_groups=n_groups)


def downsample(mask: GroupMask, factor: int) -> np.ndarray:
    """Group ids at feature resolution: cell (r,c) = block of pixel (r*f, c*f)."""
    if factor <= 0 or mask.block_size % factor:
        raise DimensionError(f"factor {factor} does not divide block size {mask.block_size}")
    rep = mask.block_size // factor
    return np.repeat(np.repeat(mask.grid, rep, axis=0), rep, axis=1)


def present_ids(mask: GroupMask) -> list[int]:
    return [int(v) for v in np.unique(mask.grid)]


def indicator(mask: GroupMask, group_id: int) -> GroupIndicator:
    if not 0 <= group_id < mask.n_groups:
        raise AnnotationError(f"group id {group_id} out of range [0, {mask.n_groups})")
    return GroupIndicator(group_id=group_id, selector=mask.grid == group_id)


def _write_varint(out: bytearray, v: int) -> None:
    if v < 0:
        raise FormatError(f"varint cannot hold {v}")
    while True:
        b = v & 0x7F
        v >>= 7
        if v:
            out.append(b | 0x80)
        else:
            out.append(b)
            return


def _read_varint(data: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise FormatError("truncated varint")
        b = data[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise FormatError("overlong varint")


def serialize_rle(mask: GroupMask) -> bytes:
    """Header (image_h, image_w, B, N as varints) + row-major (id, run) pairs."""
    out = bytearray()
    _write_varint(out, mask.image_h)
    _write_varint(out, mask.image_w)
    _write_varint(out, mask.block_size)
    _write_varint(out, mask.n_groups)
    flat = mask.grid.reshape(-1)
    i = 0
    n = flat.size
    while i < n:
        j = i
        while j < n and flat[j] == flat[i]:
            j += 1
        _write_varint(out, int(flat[i]))
        _write_varint(out, j - i)
        i = j
    return bytes(out)


def deserialize_rle(data: bytes) -> GroupMask:
    pos = 0
    image_h, pos = _read_varint(data, pos)
    image_w, pos = _read_varint(data, pos)
    B, pos = _read_varint(data, pos)
    n_groups, pos = _read_varint(data, pos)
    if image_h <= 0 or image_w <= 0 or B <= 0 or n_groups <= 0:
        raise FormatError("bad mask header")
    if n_groups > MAX_GROUPS:
        raise FormatError(f"group count {n_groups} exceeds format limit")
    padded_h = _pad_up(image_h, B)
    padded_w = _pad_up(image_w, B)
    total = (padded_h // B) * (padded_w // B)
    flat = np.zeros(total, dtype=np.uint16)
    filled = 0
    while filled < total:
        gid, pos = _read_varint(data, pos)
        run, pos = _read_varint(data, pos)
        if gid >= n_groups:
            raise FormatError(f"group id {gid} >= declared count {n_groups}")
        if run == 0 or filled + run > total:
            raise FormatError("run length overflows grid")
        flat[filled:filled + run] = gid
        filled += run
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after mask runs")
    return GroupMask(image_h=image_h, image_w=image_w,
                     padded_h=padded_h, padded_w=padded_w,
                     block_size=B, grid=flat.reshape(padded_h // B, padded_w // B),
                     n_groups=n_groups)
