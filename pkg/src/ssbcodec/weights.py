"""Model weight containers: shape schedule, seeded init, binary file format.

File layout: magic "SSWT", version u8, tensor count u32, then per tensor
{name_len u16, name utf-8, ndim u8, dims u32 x ndim, raw float32 data},
all little-endian, closed by a u64 FNV-1a digest of every preceding byte.
The digest doubles as the weight identity stored in bitstream headers.

Linear and attention weights use [out, in] layout, 1x1 convolutions are
stored as their 2-D matrices, strided convs as [out, in, kh, kw] and
transposed convs as [in, out, kh, kw].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .config import CodecConfig
from .errors import CompatibilityError, FormatError
from .hashing import fnv1a64

MAGIC = b"SSWT"
VERSION = 1


@dataclass(frozen=True)
class ModelWeights:
    tensors: dict[str, np.ndarray]
    digest: int


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


def expected_shapes(cfg: CodecConfig) -> dict[str, tuple]:
    """Canonical name -> shape schedule; also fixes the file tensor order."""
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
        widths = cfg.slice_widths()
        cum = 0
        for s, ws in enumerate(widths):
            in_ch = 2 * M + cum
            shapes[f"charm.s{s}.fc1.w"] = (hyp, in_ch)
            shapes[f"charm.s{s}.fc1.b"] = (hyp,)
            shapes[f"charm.s{s}.fc2.w"] = (2 * ws, hyp)
            shapes[f"charm.s{s}.fc2.b"] = (2 * ws,)
            cum += ws

    shapes["fp.mu"] = (hyp,)
    shapes["fp.sigma_raw"] = (hyp,)
    return shapes


def _fan_in(name: str, shape: tuple) -> int:
    if len(shape) == 2:
        return shape[1]
    if len(shape) == 4:
        if name.startswith("hs."):
            return shape[0] * shape[2] * shape[3]
        return shape[1] * shape[2] * shape[3]
    return shape[0]


def init_weights(cfg: CodecConfig, seed: int = 0) -> ModelWeights:
    """Seeded random init, shaped per expected_shapes."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in expected_shapes(cfg).items():
        if name.endswith("ln1.g") or name.endswith("ln2.g"):
            t = np.ones(shape, np.float32)
        elif name == "fp.mu":
            t = np.zeros(shape, np.float32)
        elif name == "fp.sigma_raw":
            t = np.full(shape, 0.5, np.float32)
        elif name.endswith(".b") or name.endswith("ln1.b") or name.endswith("ln2.b"):
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
    body = _serialize_body(tensors)
    return ModelWeights(tensors=tensors, digest=fnv1a64(body))


def _serialize_body(tensors: dict[str, np.ndarray]) -> bytes:
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
    return bytes(out)


def serialize_weights(weights: ModelWeights) -> bytes:
    body = _serialize_body(weights.tensors)
    return body + struct.pack("<Q", fnv1a64(body))


def save_weights(path: str, weights: ModelWeights) -> None:
    with open(path, "wb") as f:
        f.write(serialize_weights(weights))


def deserialize_weights(data: bytes) -> ModelWeights:
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
    return ModelWeights(tensors=tensors, digest=actual)


def load_weights(path: str) -> ModelWeights:
    with open(path, "rb") as f:
        return deserialize_weights(f.read())


def check_weights(weights: ModelWeights, cfg: CodecConfig) -> None:
    expected = expected_shapes(cfg)
    missing = expected.keys() - weights.tensors.keys()
    extra = weights.tensors.keys() - expected.keys()
    if missing or extra:
        raise CompatibilityError(
            f"weight names do not match config (missing {sorted(missing)[:3]}, "
            f"extra {sorted(extra)[:3]})")
    for name, shape in expected.items():
        got = tuple(weights.tensors[name].shape)
        if got != shape:
            raise CompatibilityError(f"{name}: shape {got}, config wants {shape}")
