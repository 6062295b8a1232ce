import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssbcodec import groupmask as gm
from ssbcodec.errors import AnnotationError, CapacityError, DimensionError, FormatError


def ann_from(width, height, *regions) -> gm.AnnotationSet:
    return gm.load_annotations({"width": width, "height": height, "regions": list(regions)})


def bbox(rid, x, y, w, h, label="obj"):
    return {"region_id": rid, "label": label, "bbox": [x, y, w, h]}


def pixel_oracle_grid(ann: gm.AnnotationSet, B: int) -> dict[int, set]:
    """region_id -> set of blocks containing at least one covered pixel."""
    covered = {}
    for r in ann.regions:
        blocks = set()
        for y in range(ann.height):
            for x in range(ann.width):
                if r.bbox is not None:
                    bx, by, bw, bh = r.bbox
                    hit = bx <= x < bx + bw and by <= y < by + bh
                else:
                    hit = bool(r.bitmap[y, x])
                if hit:
                    blocks.add((y // B, x // B))
        covered[r.region_id] = blocks
    return covered


class TestBuildMask:
    def test_single_bbox_against_pixel_oracle(self):
        ann = ann_from(96, 96, bbox(1, 10, 10, 50, 20))
        mask = gm.build_mask(ann, 32)
        oracle_blocks = pixel_oracle_grid(ann, 32)[1]
        assert oracle_blocks == {(0, 0), (0, 1)}
        expected = np.zeros((3, 3), np.uint16)
        for br, bc in oracle_blocks:
            expected[br, bc] = 1
        assert np.array_equal(mask.grid, expected)
        assert mask.n_groups == 2

    def test_empty_annotation(self):
        mask = gm.build_mask(ann_from(64, 64), 32)
        assert mask.n_groups == 1
        assert not mask.grid.any()

    def test_merge_overlapping_blocks(self):
        # both boxes touch block (0,0); merged into one group numbered 1
        ann = ann_from(96, 96, bbox(3, 0, 0, 20, 20), bbox(7, 25, 25, 20, 20))
        mask = gm.build_mask(ann, 32, gm.MERGE_OVERLAPS)
        assert mask.n_groups == 2
        union = pixel_oracle_grid(ann, 32)[3] | pixel_oracle_grid(ann, 32)[7]
        got = {tuple(map(int, rc)) for rc in zip(*np.nonzero(mask.grid == 1))}
        assert got == union

    def test_merge_is_transitive(self):
        # a-b overlap and b-c overlap, a-c do not: all one group
        ann = ann_from(192, 32,
                       bbox(1, 0, 0, 40, 10),
                       bbox(2, 50, 0, 60, 10),
                       bbox(3, 120, 0, 30, 10))
        mask = gm.build_mask(ann, 32, gm.MERGE_OVERLAPS)
        assert mask.n_groups == 2
        assert set(np.unique(mask.grid)) == {0, 1}
        assert np.array_equal(mask.grid, [[1, 1, 1, 1, 1, 0]])

    def test_merge_numbering_by_smallest_region_id(self):
        ann = ann_from(128, 32, bbox(5, 0, 0, 10, 10), bbox(2, 96, 0, 10, 10))
        mask = gm.build_mask(ann, 32, gm.MERGE_OVERLAPS)
        # region 2 owns group 1, region 5 owns group 2
        assert mask.grid[0, 3] == 1
        assert mask.grid[0, 0] == 2

    def test_separate_policy_largest_overlap_wins(self):
        # both regions touch block (0,1); region 2 covers more pixels there
        ann = ann_from(96, 32, bbox(1, 0, 0, 36, 10), bbox(2, 40, 0, 40, 10))
        mask = gm.build_mask(ann, 32, gm.SEPARATE)
        assert mask.n_groups == 3
        assert mask.grid[0, 0] == 1   # region 1 uncontested
        assert mask.grid[0, 1] == 2   # contested: 4*10 px vs 24*10 px
        assert mask.grid[0, 2] == 2

    def test_separate_policy_tie_goes_to_smaller_id(self):
        # identical 8x8 coverage of block (0,0) from both regions
        ann = ann_from(64, 32, bbox(9, 0, 0, 8, 8), bbox(4, 8, 8, 8, 8))
        mask = gm.build_mask(ann, 32, gm.SEPARATE)
        assert mask.grid[0, 0] == 1
        # numbering follows region_id order: region 4 -> 1, region 9 dropped
        assert mask.n_groups == 2

    def test_separate_policy_eclipsed_region_dropped(self):
        ann = ann_from(64, 32, bbox(1, 0, 0, 30, 30), bbox(2, 10, 10, 4, 4))
        mask = gm.build_mask(ann, 32, gm.SEPARATE)
        assert mask.n_groups == 2
        assert set(np.unique(mask.grid)) == {0, 1}

    def test_padding_block_membership(self):
        # 100x70 image pads to 128x96; bottom-right block owns its pad pixels
        ann = ann_from(70, 100, bbox(1, 64, 96, 6, 4))
        mask = gm.build_mask(ann, 32)
        assert (mask.padded_h, mask.padded_w) == (128, 96)
        assert mask.grid.shape == (4, 3)
        assert mask.grid[3, 2] == 1

    def test_bitmap_geometry(self):
        # pixels 5..7 of a 4x4 image set, row-major counts [5, 3, 8]
        ann = ann_from(4, 4, {"region_id": 1, "label": "x",
                              "rle_mask": {"counts": [5, 3, 8], "size": [4, 4]}})
        assert ann.regions[0].bitmap[1, 1]
        assert ann.regions[0].bitmap[1, 3]
        assert ann.regions[0].bitmap.sum() == 3
        mask = gm.build_mask(ann, 2)
        assert mask.grid[0, 0] == 1 and mask.grid[0, 1] == 1
        assert mask.grid[1, 0] == 0

    def test_block_size_stride_check(self):
        with pytest.raises(DimensionError):
            gm.build_mask(ann_from(64, 64), 24, stride=16)

    def test_capacity_limit(self):
        regions = tuple(gm.Region(i, "", bbox=(i, 0, 1, 1)) for i in range(65536))
        ann = gm.AnnotationSet(width=65536, height=1, regions=regions)
        with pytest.raises(CapacityError):
            gm.build_mask(ann, 1, gm.SEPARATE)


class TestAnnotationLoader:
    def test_out_of_bounds_bbox(self):
        with pytest.raises(AnnotationError):
            ann_from(64, 64, bbox(1, 60, 0, 10, 10))

    def test_duplicate_region_id(self):
        with pytest.raises(AnnotationError):
            ann_from(64, 64, bbox(1, 0, 0, 8, 8), bbox(1, 16, 16, 8, 8))

    def test_empty_bbox(self):
        with pytest.raises(AnnotationError):
            ann_from(64, 64, bbox(1, 0, 0, 0, 5))

    def test_missing_geometry(self):
        with pytest.raises(AnnotationError):
            ann_from(64, 64, {"region_id": 1, "label": "x"})

    def test_bad_rle_coverage(self):
        with pytest.raises(AnnotationError):
            ann_from(4, 4, {"region_id": 1, "label": "x",
                            "rle_mask": {"counts": [5, 3], "size": [4, 4]}})


def random_mask(r: np.random.Generator, max_groups=6) -> gm.GroupMask:
    B = int(r.choice([8, 16, 32]))
    gh, gw = int(r.integers(1, 6)), int(r.integers(1, 6))
    n = int(r.integers(1, max_groups))
    grid = r.integers(0, n, size=(gh, gw)).astype(np.uint16)
    grid.flat[0] = 0  # keep id 0 present
    image_h = gh * B - int(r.integers(0, B))
    image_w = gw * B - int(r.integers(0, B))
    return gm.GroupMask(image_h=max(1, image_h), image_w=max(1, image_w),
                        padded_h=gh * B, padded_w=gw * B, block_size=B,
                        grid=grid, n_groups=int(grid.max()) + 1)


class TestDownsample:
    def test_factor_equal_block_size(self):
        mask = gm.build_mask(ann_from(96, 96, bbox(1, 10, 10, 50, 20)), 32)
        assert np.array_equal(gm.downsample(mask, 32), mask.grid)

    def test_half_block_replicates(self):
        # grid [[1,1,0],[0,0,0],[0,0,0]], every block id replicated 2x2
        mask = gm.build_mask(ann_from(96, 96, bbox(1, 10, 10, 50, 20)), 32)
        d = gm.downsample(mask, 16)
        assert d.shape == (6, 6)
        expected = np.zeros((6, 6), np.uint16)
        expected[:2, :4] = 1
        assert np.array_equal(d, expected)

    def test_composition(self):
        r = np.random.default_rng(3)
        for _ in range(20):
            mask = random_mask(r)
            if mask.block_size % 16:
                continue
            d16 = gm.downsample(mask, 16)
            d4 = gm.downsample(mask, 4)
            assert np.array_equal(d16, d4[::4, ::4])

    def test_levels_mutually_consistent(self):
        r = np.random.default_rng(4)
        for _ in range(20):
            mask = random_mask(r)
            if mask.block_size % 16:
                continue
            d16 = gm.downsample(mask, 16)
            d4 = gm.downsample(mask, 4)
            up = np.repeat(np.repeat(d16, 4, axis=0), 4, axis=1)
            assert np.array_equal(up, d4)

    def test_non_divisor_factor(self):
        mask = gm.build_mask(ann_from(64, 64), 32)
        with pytest.raises(DimensionError):
            gm.downsample(mask, 5)


class TestIndicators:
    def test_partition(self):
        r = np.random.default_rng(5)
        for _ in range(10):
            mask = random_mask(r)
            total = np.zeros_like(mask.grid, dtype=int)
            for gid in gm.present_ids(mask):
                ind = gm.indicator(mask, gid)
                total += ind.selector.astype(int)
            assert (total == 1).all()


class TestRle:
    def test_all_zero_grid_single_run(self):
        mask = gm.build_mask(ann_from(128, 128), 32)
        data = gm.serialize_rle(mask)
        # varints: 128, 128, 32, N=1, then run (0, 16)
        assert data == bytes([0x80, 0x01, 0x80, 0x01, 32, 1, 0, 16])

    def test_round_trip_random_masks(self):
        r = np.random.default_rng(6)
        for _ in range(1000):
            mask = random_mask(r)
            back = gm.deserialize_rle(gm.serialize_rle(mask))
            assert back.image_h == mask.image_h and back.image_w == mask.image_w
            assert back.block_size == mask.block_size
            assert back.n_groups == mask.n_groups
            assert np.array_equal(back.grid, mask.grid)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_round_trip_property(self, seed):
        mask = random_mask(np.random.default_rng(seed))
        back = gm.deserialize_rle(gm.serialize_rle(mask))
        assert np.array_equal(back.grid, mask.grid)
        assert back.n_groups == mask.n_groups

    def test_two_region_mask_stays_small(self):
        # 8x8 = 64 blocks, two bbox regions
        ann = ann_from(256, 256, bbox(1, 0, 0, 64, 64), bbox(2, 128, 128, 96, 64))
        mask = gm.build_mask(ann, 32)
        data = gm.serialize_rle(mask)
        flat = mask.grid.reshape(-1)
        runs = 1 + int(np.count_nonzero(flat[1:] != flat[:-1]))
        # header: 256 twice (2 bytes each), B, N; every id and run fits 1 byte
        assert len(data) == 6 + 2 * runs
        assert len(data) < 128

    def test_truncated_stream(self):
        data = gm.serialize_rle(gm.build_mask(ann_from(128, 128), 32))
        with pytest.raises(FormatError):
            gm.deserialize_rle(data[:-1])

    def test_trailing_bytes(self):
        data = gm.serialize_rle(gm.build_mask(ann_from(128, 128), 32))
        with pytest.raises(FormatError):
            gm.deserialize_rle(data + b"\x00")

    def test_id_out_of_declared_range(self):
        # header says N=1 but a run carries id 2
        bad = bytes([0x80, 0x01, 0x80, 0x01, 32, 1, 2, 16])
        with pytest.raises(FormatError):
            gm.deserialize_rle(bad)

    def test_run_overflow(self):
        bad = bytes([0x80, 0x01, 0x80, 0x01, 32, 1, 0, 17])
        with pytest.raises(FormatError):
            gm.deserialize_rle(bad)
