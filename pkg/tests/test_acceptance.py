"""Acceptance gate: the headline codec contracts, one verdict line each.

Each test prints `<criterion>: PASS|FAIL` straight to the terminal so a
full run reads as a checklist.  Tolerances are part of the contract and
are asserted, not logged.
"""

import itertools
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from ssbcodec import rc
from ssbcodec.codec import (decode_groups, decode_latents, encode_image,
                            image_to_float, pad_image)
from ssbcodec.config import CodecConfig
from ssbcodec.container import extract_groups, read_ssb, segment_layout
from ssbcodec.entropy import quantize
from ssbcodec.errors import SsbError
from ssbcodec.groupmask import GroupMask, downsample
from ssbcodec.metrics import RegionSpec, bpp, psnr
from ssbcodec.transform import RuntimeModel, analysis_transform
from ssbcodec.weights import init_weights

from support import mask_from_grid, record_verdict, tiny_config


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        record_verdict(name, False)
        raise
    record_verdict(name, True)


def group_pixels(mask: GroupMask, gids, shape) -> np.ndarray:
    per_pixel = np.repeat(np.repeat(mask.grid, mask.block_size, 0),
                          mask.block_size, 1)
    return np.isin(per_pixel[:shape[0], :shape[1]], list(gids))


@pytest.fixture(scope="module")
def fleet(tiny_model):
    """50 random fixtures: image up to 128x128, mask with 2-4 groups."""
    cfg, weights, rt = tiny_model
    rng = np.random.default_rng(0x5EED)
    fixtures = []
    for _ in range(50):
        h = int(rng.integers(33, 129))
        w = int(rng.integers(33, 129))
        n = int(rng.integers(2, 5))
        gh, gw = -(-h // 16), -(-w // 16)
        grid = rng.integers(0, n, size=(gh, gw)).astype(np.uint16)
        # every group id must own at least one block
        flat = rng.choice(gh * gw, size=n, replace=False)
        grid.reshape(-1)[flat] = np.arange(n, dtype=np.uint16)
        mask = GroupMask(image_h=h, image_w=w, padded_h=gh * 16,
                         padded_w=gw * 16, block_size=16, grid=grid,
                         n_groups=n)
        image = rng.integers(0, 256, size=(3, h, w), dtype=np.uint8)
        fixtures.append((image, mask))
    return rt, fixtures


@pytest.fixture(scope="module")
def golden256():
    """3-group 256x256 fixture under the default configuration, timed."""
    cfg = CodecConfig().validate()
    rt = RuntimeModel(init_weights(cfg, seed=17), cfg)
    rng = np.random.default_rng(99)
    image = rng.integers(0, 256, size=(3, 256, 256), dtype=np.uint8)
    grid = np.zeros((8, 8), np.uint16)
    grid[2:5, 2:5] = 1
    grid[5:8, 0:3] = 2
    mask = GroupMask(image_h=256, image_w=256, padded_h=256, padded_w=256,
                     block_size=32, grid=grid, n_groups=3)
    t0 = time.perf_counter()
    data, report = encode_image(image, mask, rt, max_workers=1)
    out, _ = decode_groups(data, [0, 1, 2], rt, max_workers=1)
    elapsed = time.perf_counter() - t0
    return data, report, out, elapsed


def test_encode_independence(fleet):
    with criterion("encode-independence"):
        rt, fixtures = fleet
        rng = np.random.default_rng(0xA11CE)
        t0 = time.perf_counter()
        for image, mask in fixtures:
            g = int(rng.integers(mask.n_groups))
            x = pad_image(image_to_float(image), mask)
            y1 = quantize(analysis_transform(x, mask, rt))
            other = image.copy()
            outside = ~group_pixels(mask, [g], image.shape[1:])
            other[:, outside] = rng.integers(
                0, 256, size=(3, int(outside.sum())), dtype=np.uint8)
            x2 = pad_image(image_to_float(other), mask)
            y2 = quantize(analysis_transform(x2, mask, rt))
            cells = downsample(mask, 16) == g
            assert np.array_equal(y1[:, cells], y2[:, cells])
        assert time.perf_counter() - t0 < 120


def test_selective_decode_equivalence(fleet):
    with criterion("selective-decode-equivalence"):
        rt, fixtures = fleet
        t0 = time.perf_counter()
        for image, mask in fixtures:
            data, _ = encode_image(image, mask, rt)
            full, _ = decode_groups(data, range(mask.n_groups), rt)
            groups = range(mask.n_groups)
            selections = [(g,) for g in groups]
            selections += list(itertools.combinations(groups, 2))
            for sel in selections:
                part, _ = decode_groups(extract_groups(data, sel), sel, rt)
                px = group_pixels(mask, sel, full.shape[1:])
                assert np.array_equal(part[:, px], full[:, px])
        assert time.perf_counter() - t0 < 180


def test_negative_control_plain_attention(tiny_model):
    with criterion("negative-control-plain-attention"):
        cfg, weights, _ = tiny_model
        leaky = RuntimeModel(weights, tiny_config(group_attention=False))
        grid = [[0, 0, 1, 1], [0, 0, 1, 1], [1, 1, 0, 0], [1, 1, 0, 0]]
        mask = mask_from_grid(grid)
        rng = np.random.default_rng(0xBAD)
        image = rng.integers(0, 256, size=(3, 64, 64), dtype=np.uint8)
        other = image.copy()
        outside = ~group_pixels(mask, [0], image.shape[1:])
        other[:, outside] = rng.integers(
            0, 256, size=(3, int(outside.sum())), dtype=np.uint8)
        y1 = quantize(analysis_transform(
            pad_image(image_to_float(image), mask), mask, leaky))
        y2 = quantize(analysis_transform(
            pad_image(image_to_float(other), mask), mask, leaky))
        cells = downsample(mask, 16) == 0
        # without group-restricted attention the harness MUST see a leak
        assert not np.array_equal(y1[:, cells], y2[:, cells])


def test_entropy_round_trip():
    with criterion("entropy-round-trip"):
        scales = rc.scale_table(0.11)
        tables = rc.build_cdf_tables(scales, 64, 16)
        rng = np.random.default_rng(0xE27)
        t0 = time.perf_counter()
        for _ in range(500):
            # slice-sized sequences over the coder's modeled scale range
            n = int(rng.integers(1000, 3001))
            sigma = np.exp(rng.uniform(np.log(0.11), np.log(64.0), size=n))
            idx = rc.scale_index(sigma.astype(np.float32), scales)
            resid = np.clip(np.rint(rng.normal(0.0, sigma)),
                            -64, 64).astype(np.int32)
            data = rc.encode_symbols(resid, idx, tables, 64, 16)
            back = rc.decode_symbols(data, idx, n, tables, 64, 16)
            assert np.array_equal(back, resid)
            freq = (tables[idx, resid + 64 + 1]
                    - tables[idx, resid + 64]).astype(np.float64)
            est_bits = float(np.sum(16.0 - np.log2(freq)))
            coded_bits = 8 * len(data)
            assert abs(coded_bits - est_bits) <= est_bits * 0.01 + 32
        assert time.perf_counter() - t0 < 60


def test_container_integrity(fleet):
    with criterion("container-integrity"):
        rt, fixtures = fleet
        image, mask = fixtures[0]
        golden, _ = encode_image(image, mask, rt)
        rng = np.random.default_rng(0xF0221)

        panics = []
        mutants = []
        for _ in range(500):
            mutants.append(golden[:int(rng.integers(len(golden) + 1))])
        for _ in range(500):
            flipped = bytearray(golden)
            flipped[int(rng.integers(len(golden)))] ^= 1 << int(rng.integers(8))
            mutants.append(bytes(flipped))
        parsed = []
        for data in mutants:
            try:
                read_ssb(data)
                parsed.append(data)
            except SsbError:
                pass
            except BaseException as exc:
                panics.append(exc)
        assert not panics
        # decode must stay structured too when the payload parses
        for data in parsed[:24]:
            try:
                decode_latents(data, read_ssb(data).present_ids or [0], rt)
            except SsbError:
                pass

        def bitmapless(data):
            file = read_ssb(data)
            skip = 29 + (-(-file.n_groups // 8) if file.is_partial else 0)
            return data[skip:]

        n = mask.n_groups
        ids = range(n)
        for p_size, q_size in [(1, 1), (1, 2), (2, 1), (2, 2), (n, 1)]:
            for P in itertools.combinations(ids, p_size):
                for Q in itertools.combinations(ids, q_size):
                    nested = extract_groups(extract_groups(golden, P), Q)
                    direct_sel = set(P) & set(Q)
                    direct = extract_groups(golden, direct_sel)
                    assert bitmapless(nested) == bitmapless(direct)


def test_per_group_encryption(tiny_model):
    with criterion("per-group-encryption"):
        cfg, weights, rt = tiny_model
        rng = np.random.default_rng(0x5EC2E7)
        grid = [[0, 1, 1], [0, 1, 0], [1, 0, 1]]
        mask = mask_from_grid(grid)
        cells = downsample(mask, 16)
        for trial in range(100):
            image = rng.integers(0, 256, size=(3, 48, 48), dtype=np.uint8)
            key = bytes(rng.integers(0, 256, size=16, dtype=np.uint8))
            wrong = bytes(rng.integers(0, 256, size=16, dtype=np.uint8))
            if wrong == key:
                continue
            plain, _ = encode_image(image, mask, rt)
            sealed, _ = encode_image(image, mask, rt, encrypt_keys={1: key})

            want, _, _, _ = decode_latents(plain, [0, 1], rt)
            got, _, _, _ = decode_latents(sealed, [0, 1], rt, keys={1: key})
            assert np.array_equal(got, want)

            bad, _, _, _ = decode_latents(sealed, [0, 1], rt,
                                          keys={1: wrong})
            altered = (bad[:, cells == 1] != want[:, cells == 1]).any(axis=0)
            assert altered.mean() >= 0.5
            assert np.array_equal(bad[:, cells == 0], want[:, cells == 0])

            a = read_ssb(plain).record_for(1).length
            b = read_ssb(sealed).record_for(1).length
            assert abs(a - b) <= 1


def test_metric_definitions():
    with criterion("metric-definitions"):
        ref = np.full((3, 24, 24), 60, np.uint8)
        rec = np.full((3, 24, 24), 61, np.uint8)
        assert abs(psnr(ref, rec) - 48.13) <= 0.01
        region = RegionSpec.from_bboxes([(0, 0, 50, 50)])
        assert bpp(1000, region, 64, 64) == 0.4
        assert psnr(ref, ref) == math.inf


def test_side_info_budget(golden256):
    with criterion("side-info-budget"):
        data, _, _, _ = golden256
        layout = {name: length for name, _, length in segment_layout(data)}
        overhead = layout["header"] + layout["mask"] + layout["group-table"]
        assert overhead <= 600


def test_throughput(golden256):
    with criterion("throughput"):
        data, report, out, elapsed = golden256
        assert out.shape == (3, 256, 256)
        assert report.total_bytes == len(data)
        assert elapsed < 10.0
