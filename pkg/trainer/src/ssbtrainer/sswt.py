"""Weight manifest and the binary weight file format shared with the codec.

File layout: magic "SSWT", version u8, tensor count u32, then per tensor
{name_len u16, name utf-8, ndim u8, dims u32 x ndim, raw float32 data},
all little-endian, closed by a u64 FNV-1a digest of every preceding byte.
This module re-states the format independently; cross-package fixtures
pin the two implementations to the same bytes.
"""

from __future__ import annotations

import struct

import numpy as np

from ssbcodec import CodecConfig, FormatError

MAGIC = b"SSWT"
VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _U64
    return h


def _block_shapes(prefix: str, width: int, heads: int, window: int) -> dict[str, tuple]:
    table = (2 * window - 1) ** 2
    s: dict[str, tuple] = {}
    s[prefix + "ln1.g"] = (width,)
    s[prefix + "ln1.b"] = (width,)
    for p in ("q", "k", "v", "o"):
        s[prefix + f"attn.w{p}"] = (width, width)
        s[prefix + f"attn.b{p}"] = (width,)
    s[prefix + "attn.rel_bias"] = (table, heads)
    s[prefix + "ln2.g"] = (width,)
    s[prefix + "ln2.b"] = (width,)
    s[prefix + "mlp.fc1.w"] = (4 * width, width)
    s[prefix + "mlp.fc1.b"] = (4 * width,)
    s[prefix + "mlp.fc2.w"] = (width, 4 * width)
    s[prefix + "mlp.fc2.b"] = (width,)
    return s


def weight_manifest(cfg: CodecConfig) -> dict[str, tuple]:
    """Tensor name -> shape, in the canonical file order.

    Linear and attention weights are [out, in], 1x1 mixes are their 2-D
    matrices, strided convolutions [out, in, kh, kw], transposed ones
    [in, out, kh, kw].
    """
    cfg.validate()
    C = cfg.channels
    M = cfg.latent_channels
    hyp = cfg.hyper_channels
    w = cfg.window_size
    shapes: dict[str, tuple] = {}

    prev = 3
    for i in range(4):
        shapes[f"ga.down{i}.w"] = (C[i], prev * 4)
        shapes[f"ga.down{i}.b"] = (C[i],)
        for j in range(cfg.depths[i]):
            shapes.update(_block_shapes(f"ga.s{i}.b{j}.", C[i], cfg.heads[i], w))
        prev = C[i]
    shapes["ga.head.w"] = (M, C[3])
    shapes["ga.head.b"] = (M,)

    shapes["gs.embed.w"] = (C[3], M)
    shapes["gs.embed.b"] = (C[3],)
    for i in range(4):
        k = 3 - i
        for j in range(cfg.depths[k]):
            shapes.update(_block_shapes(f"gs.s{i}.b{j}.", C[k], cfg.heads[k], w))
        if k > 0:
            shapes[f"gs.up{i}.w"] = (C[k - 1] * 4, C[k])
            shapes[f"gs.up{i}.b"] = (C[k - 1] * 4,)
    shapes["gs.out.w"] = (12, C[0])
    shapes["gs.out.b"] = (12,)

    shapes["ha.c1.w"] = (hyp, M, 3, 3)
    shapes["ha.c1.b"] = (hyp,)
    shapes["ha.c2.w"] = (hyp, hyp, 3, 3)
    shapes["ha.c2.b"] = (hyp,)
    shapes["hs.d1.w"] = (hyp, hyp, 3, 3)
    shapes["hs.d1.b"] = (hyp,)
    shapes["hs.d2.w"] = (hyp, 2 * M, 3, 3)
    shapes["hs.d2.b"] = (2 * M,)

    if cfg.charm_enabled:
        cum = 0
        for s, ws in enumerate(cfg.slice_widths()):
            in_ch = 2 * M + cum
            shapes[f"charm.s{s}.fc1.w"] = (hyp, in_ch)
            shapes[f"charm.s{s}.fc1.b"] = (hyp,)
            shapes[f"charm.s{s}.fc2.w"] = (2 * ws, hyp)
            shapes[f"charm.s{s}.fc2.b"] = (2 * ws,)
            cum += ws

    shapes["fp.mu"] = (hyp,)
    shapes["fp.sigma_raw"] = (hyp,)
    return shapes


def serialize_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    out = bytearray()
    out += MAGIC
    out += struct.pack("<BI", VERSION, len(tensors))
    for name, t in tensors.items():
        nb = name.encode("utf-8")
        if len(nb) > 0xFFFF:
            raise FormatError(f"tensor name too long: {name[:32]}...")
        arr = np.ascontiguousarray(t, dtype="<f4")
        out += struct.pack("<H", len(nb))
        out += nb
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    return bytes(out) + struct.pack("<Q", fnv1a64(bytes(out)))


def deserialize_tensors(data: bytes) -> tuple[dict[str, np.ndarray], int]:
    """Parse a weight file into (tensors, digest), verifying the digest."""
    if len(data) < 17 or data[:4] != MAGIC:
        raise FormatError("not a weight file")
    version, count = struct.unpack_from("<BI", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported weight file version {version}")
    pos = 9
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            raw = data[pos:pos + 4 * n]
            if len(raw) != 4 * n:
                raise struct.error("tensor data")
            pos += 4 * n
        except struct.error as exc:
            raise FormatError(f"truncated weight file: {exc}") from exc
        if name in tensors:
            raise FormatError(f"duplicate tensor {name!r}")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    if len(data) - pos != 8:
        raise FormatError("bad weight file length")
    (stored,) = struct.unpack_from("<Q", data, pos)
    actual = fnv1a64(data[:pos])
    if stored != actual:
        raise FormatError(f"weight digest mismatch: {stored:#x} != {actual:#x}")
    return tensors, actual


def load_tensors(path: str) -> tuple[dict[str, np.ndarray], int]:
    with open(path, "rb") as f:
        return deserialize_tensors(f.read())


def save_tensors(path: str, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(serialize_tensors(tensors))
