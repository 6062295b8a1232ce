"""Command-line front end: mask generation, coding, extraction, inspection.

Every command exits 0 on success and nonzero with a one-line diagnostic on
failure; output files are written to a temporary name and renamed, so a
failed run never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import replace

import numpy as np

from . import codec, container, imageio, metrics
from .config import CodecConfig, config_from_text
from .errors import FormatError, SsbError
from .groupmask import (GroupMask, build_mask, deserialize_rle,
                        load_annotations, serialize_rle)
from .transform import RuntimeModel
from .weights import load_weights


def _threads() -> int:
    raw = os.environ.get("SSB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise FormatError(f"SSB_THREADS={raw!r} is not an integer")
    if n < 1:
        raise FormatError(f"SSB_THREADS must be >= 1, got {n}")
    return n


def _write_atomic(path: str, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ssb-tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _load_config(path: str | None) -> CodecConfig:
    if path is None:
        return CodecConfig().validate()
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_text(fh.read())


def _load_model(weights_path: str, cfg: CodecConfig) -> RuntimeModel:
    return RuntimeModel(load_weights(weights_path), cfg)


def _parse_group_keys(pairs: list[str], what: str) -> dict[int, bytes]:
    keys: dict[int, bytes] = {}
    for pair in pairs or []:
        group, _, keyfile = pair.partition("=")
        if not _ or not group or not keyfile:
            raise FormatError(f"--{what} wants GROUP=KEYFILE, got {pair!r}")
        try:
            gid = int(group)
        except ValueError:
            raise FormatError(f"--{what}: group {group!r} is not an integer")
        keys[gid] = _read(keyfile)
    return keys


def _parse_groups(text: str, available: list[int]) -> list[int]:
    if text == "all":
        return list(available)
    try:
        return [int(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise FormatError(f"--groups wants 'all' or a comma list, got {text!r}")


def _single_group_mask(height: int, width: int, block: int) -> GroupMask:
    pad = lambda n: ((n + block - 1) // block) * block
    grid = np.zeros((pad(height) // block, pad(width) // block), np.uint16)
    return GroupMask(image_h=height, image_w=width, padded_h=pad(height),
                     padded_w=pad(width), block_size=block, grid=grid,
                     n_groups=1)


def cmd_genmask(args) -> int:
    with open(args.annotations, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    mask = build_mask(load_annotations(doc), args.block, args.policy)
    _write_atomic(args.output, serialize_rle(mask))
    print(f"mask={args.output}")
    print(f"n_groups={mask.n_groups}")
    print(f"grid={mask.grid_h}x{mask.grid_w}")
    return 0


def cmd_encode(args) -> int:
    workers = _threads()
    keys = _parse_group_keys(args.encrypt, "encrypt")
    cfg = _load_config(args.config)
    if args.no_gi:
        cfg = replace(cfg, group_attention=False).validate()
    image = imageio.read_image(args.image)
    if args.no_mask:
        mask = _single_group_mask(image.shape[1], image.shape[2], cfg.block_size)
    else:
        mask = deserialize_rle(_read(args.mask))
    rt = _load_model(args.weights, cfg)
    data, report = codec.encode_image(image, mask, rt, encrypt_keys=keys,
                                      max_workers=workers)
    _write_atomic(args.output, data)
    print(f"file={args.output}")
    print(f"total_bytes={report.total_bytes}")
    print(f"bpp={report.bpp:.6f}")
    print(f"shared_bits={report.shared_bits}")
    print(f"clamp_events={report.clamp_events}")
    for g in sorted(report.per_group_bits):
        print(f"group_bits.{g}={report.per_group_bits[g]}")
        print(f"est_bits.{g}={report.estimated_bits[g]:.1f}")
    return 0


def cmd_extract(args) -> int:
    data = _read(args.input)
    file = container.read_ssb(data)
    wanted = _parse_groups(args.groups, file.present_ids)
    out = container.extract_groups(data, wanted)
    _write_atomic(args.output, out)
    print(f"file={args.output}")
    print(f"total_bytes={len(out)}")
    print(f"kept={','.join(str(g) for g in container.read_ssb(out).present_ids)}")
    return 0


def cmd_decode(args) -> int:
    workers = _threads()
    keys = _parse_group_keys(args.key, "key")
    cfg = _load_config(args.config)
    data = _read(args.input)
    file = container.read_ssb(data)
    if file.gi_disabled:
        cfg = replace(cfg, group_attention=False).validate()
    if file.charm_disabled == cfg.charm_enabled:
        cfg = replace(cfg, charm_enabled=not file.charm_disabled).validate()
    rt = _load_model(args.weights, cfg)
    wanted = _parse_groups(args.groups, file.present_ids)
    image, report = codec.decode_groups(
        data, wanted, rt, keys=keys, strict_keys=args.strict_keys,
        max_workers=workers)
    for g in report.keyless_ids:
        print(f"warning: group {g} is encrypted and was decoded without "
              "a key; its content is scrambled", file=sys.stderr)
    _write_atomic(args.output, imageio.encode_image_file(image, args.output))
    mask = deserialize_rle(file.mask_rle)
    region = metrics.RegionSpec.from_groups(report.decoded_ids)
    roi_bpp = metrics.bpp(8 * len(data), region, file.image_h, file.image_w,
                          mask)
    print(f"file={args.output}")
    print(f"decoded={','.join(str(g) for g in report.decoded_ids)}")
    print(f"shared_bits={report.shared_bits}")
    for g in sorted(report.per_group_bits):
        print(f"group_bits.{g}={report.per_group_bits[g]}")
    print(f"roi_bpp={roi_bpp:.6f}")
    return 0


def cmd_inspect(args) -> int:
    data = _read(args.input)
    file = container.read_ssb(data)
    print("magic=SSB1")
    print(f"version={file.version}")
    print(f"flags=0x{file.flags:02x}")
    print(f"partial={'true' if file.is_partial else 'false'}")
    print(f"gi_disabled={'true' if file.gi_disabled else 'false'}")
    print(f"charm_disabled={'true' if file.charm_disabled else 'false'}")
    print(f"image_h={file.image_h}")
    print(f"image_w={file.image_w}")
    print(f"block_size={file.block_size}")
    print(f"n_groups={file.n_groups}")
    print(f"latent_channels={file.latent_channels}")
    print(f"slices={file.slices}")
    print(f"weights_digest={file.weights_digest:016x}")
    mask = deserialize_rle(file.mask_rle)
    print(f"mask_bytes={len(file.mask_rle)}")
    print(f"mask_grid={mask.grid_h}x{mask.grid_w}")
    print(f"z_bytes={len(file.z_stream)}")
    for r in file.records:
        print(f"group.{r.group_id}: encrypted={'true' if r.encrypted else 'false'} "
              f"salt={r.key_salt:016x} offset={r.offset} length={r.length}")
    total = 0
    for name, offset, length in container.segment_layout(data):
        print(f"segment.{name}: offset={offset} length={length}")
        total += length
    print(f"total_bytes={len(data)}")
    if total != len(data):
        raise FormatError(f"segments cover {total} of {len(data)} bytes")
    return 0


def cmd_metrics(args) -> int:
    ref = imageio.read_image(args.ref)
    rec = imageio.read_image(args.rec)
    mask = deserialize_rle(_read(args.mask)) if args.mask else None
    if args.bbox:
        boxes = []
        for text in args.bbox:
            parts = [int(v) for v in text.split(",")]
            if len(parts) != 4:
                raise FormatError(f"--bbox wants X,Y,W,H, got {text!r}")
            boxes.append(parts)
        region = metrics.RegionSpec.from_bboxes(boxes)
    elif args.groups:
        region = metrics.RegionSpec.from_groups(
            int(g) for g in args.groups.split(","))
    else:
        region = metrics.RegionSpec.full()

    err = metrics.mse(ref, rec, region, mask)
    quality = metrics.psnr(ref, rec, region, mask)
    pixels = int(metrics.resolve_region(
        region, ref.shape[1], ref.shape[2], mask).sum())
    values = {"mse": f"{err:.6f}",
              "psnr": "inf" if quality == metrics.PSNR_INF else f"{quality:.4f}",
              "region_pixels": str(pixels)}
    if args.ssb:
        bits = 8 * len(_read(args.ssb))
        values["bits"] = str(bits)
        values["bpp"] = f"{metrics.bpp(bits, region, ref.shape[1], ref.shape[2], mask):.6f}"
    for key, val in values.items():
        print(f"{key}={val}")
    if args.csv:
        line = ",".join(values.values())
        header = ",".join(values.keys())
        fresh = not os.path.exists(args.csv)
        with open(args.csv, "a", encoding="utf-8") as fh:
            if fresh:
                fh.write(header + "\n")
            fh.write(line + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssb", description="semantically structured bitstream codec")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("genmask", help="rasterize annotations to a group mask")
    p.add_argument("annotations", help="annotation JSON document")
    p.add_argument("--block", type=int, default=32, help="block side in pixels")
    p.add_argument("--policy", choices=["merge_overlaps", "separate"],
                   default="merge_overlaps")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_genmask)

    p = sub.add_parser("encode", help="compress an image into an SSB file")
    p.add_argument("--image", required=True)
    p.add_argument("--mask")
    p.add_argument("--weights", required=True)
    p.add_argument("--config")
    p.add_argument("--encrypt", action="append", metavar="GROUP=KEYFILE")
    p.add_argument("--no-gi", action="store_true",
                   help="ablation: plain windowed attention")
    p.add_argument("--no-mask", action="store_true",
                   help="ablation: ignore the mask, encode as one group")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("extract", help="keep only selected group substreams")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--groups", required=True, help="'all' or comma list")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("decode", help="reconstruct selected groups to an image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--groups", default="all", help="'all' or comma list")
    p.add_argument("--key", action="append", metavar="GROUP=KEYFILE")
    p.add_argument("--strict-keys", action="store_true",
                   help="fail instead of scramble-decoding encrypted groups")
    p.add_argument("--weights", required=True)
    p.add_argument("--config")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("inspect", help="dump container structure")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("metrics", help="distortion/rate report for a pair")
    p.add_argument("--ref", required=True)
    p.add_argument("--rec", required=True)
    p.add_argument("--bbox", action="append", metavar="X,Y,W,H")
    p.add_argument("--groups", help="comma list of group ids")
    p.add_argument("--mask", help="mask file for group regions")
    p.add_argument("--ssb", help="SSB file whose size feeds the bpp report")
    p.add_argument("--csv", help="append the report as a CSV row")
    p.set_defaults(fn=cmd_metrics)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "encode" and not args.no_mask and not args.mask:
        print("error: encode needs --mask (or --no-mask)", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except (SsbError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
