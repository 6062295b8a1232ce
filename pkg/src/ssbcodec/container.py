"""The structured bitstream: a seekable container with per-group substreams.

Layout, little-endian throughout:

    header   magic "SSB1", version u8, flags u8, image_h u32, image_w u32,
             B u16, N u16, M u16, S u8, weights_digest u64        (29 bytes)
    bitmap   ceil(N/8) bytes, present iff flags bit 0; bit g (byte g//8,
             bit g%8) set when group g's record and substream are included
    mask     len u32 + RLE bytes
    z        len u32 + coded hyper latents
    table    one 23-byte record per included group, ascending group_id:
             group_id u16, encrypted u8, key_salt u64, offset u64, length u32
    blob     substreams, contiguous in table order (offsets relative to blob)

Flag bits: 0 = partial file, 1 = group attention disabled at encode,
2 = ChARM disabled at encode (hyper-only entropy parameters).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

from .errors import CompatibilityError, FormatError, SelectionError

MAGIC = b"SSB1"
VERSION = 1
FLAG_PARTIAL = 0x01
FLAG_NO_GI = 0x02
FLAG_NO_CHARM = 0x04
_KNOWN_FLAGS = FLAG_PARTIAL | FLAG_NO_GI | FLAG_NO_CHARM

_HEADER = struct.Struct("<4sBBIIHHHBQ")
_RECORD = struct.Struct("<HBQQI")
HEADER_SIZE = _HEADER.size
RECORD_SIZE = _RECORD.size

_U16 = 0xFFFF
_U32 = 0xFFFFFFFF
_U64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class GroupRecord:
    group_id: int
    encrypted: bool
    key_salt: int
    offset: int
    length: int


@dataclass(frozen=True)
class SsbFile:
    version: int
    flags: int
    image_h: int
    image_w: int
    block_size: int
    n_groups: int
    latent_channels: int
    slices: int
    weights_digest: int
    mask_rle: bytes
    z_stream: bytes
    records: tuple[GroupRecord, ...]
    blob: bytes

    @property
    def is_partial(self) -> bool:
        return bool(self.flags & FLAG_PARTIAL)

    @property
    def gi_disabled(self) -> bool:
        return bool(self.flags & FLAG_NO_GI)

    @property
    def charm_disabled(self) -> bool:
        return bool(self.flags & FLAG_NO_CHARM)

    @property
    def present_ids(self) -> list[int]:
        return [r.group_id for r in self.records]

    def record_for(self, group_id: int) -> GroupRecord | None:
        for r in self.records:
            if r.group_id == group_id:
                return r
        return None

    def substream(self, group_id: int) -> bytes:
        r = self.record_for(group_id)
        if r is None:
            raise SelectionError(f"group {group_id} not present in this file")
        return self.blob[r.offset:r.offset + r.length]


def _check_range(name: str, value: int, limit: int) -> int:
    if not 0 <= value <= limit:
        raise FormatError(f"{name} {value} does not fit the field (max {limit})")
    return value


def _bitmap_bytes(n_groups: int, present: list[int]) -> bytes:
    bitmap = bytearray((n_groups + 7) // 8)
    for g in present:
        bitmap[g // 8] |= 1 << (g % 8)
    return bytes(bitmap)


def _emit(file: SsbFile) -> bytes:
    out = bytearray()
    out += _HEADER.pack(MAGIC, file.version, file.flags,
                        file.image_h, file.image_w, file.block_size,
                        file.n_groups, file.latent_channels, file.slices,
                        file.weights_digest)
    if file.flags & FLAG_PARTIAL:
        out += _bitmap_bytes(file.n_groups, file.present_ids)
    out += struct.pack("<I", len(file.mask_rle)) + file.mask_rle
    out += struct.pack("<I", len(file.z_stream)) + file.z_stream
    for r in file.records:
        out += _RECORD.pack(r.group_id, 1 if r.encrypted else 0,
                            r.key_salt, r.offset, r.length)
    out += file.blob
    return bytes(out)


def write_ssb(*, image_h: int, image_w: int, block_size: int, n_groups: int,
              latent_channels: int, slices: int, weights_digest: int,
              mask_rle: bytes, z_stream: bytes, substreams: list[bytes],
              encryption: dict[int, int] | None = None,
              gi_disabled: bool = False, charm_disabled: bool = False) -> bytes:
    """Serialize a full file: one substream per group, in group-id order.

    encryption maps group_id -> key_salt for groups whose substream was
    permuted; everything else gets a zero salt and a clear flag.
    """
    encryption = encryption or {}
    _check_range("image_h", image_h, _U32)
    _check_range("image_w", image_w, _U32)
    _check_range("block_size", block_size, _U16)
    _check_range("n_groups", n_groups, _U16)
    _check_range("latent_channels", latent_channels, _U16)
    _check_range("slices", slices, 0xFF)
    _check_range("weights_digest", weights_digest, _U64)
    if min(image_h, image_w, block_size, n_groups,
           latent_channels, slices) < 1:
        raise FormatError("header counts and dimensions must be positive")
    if len(substreams) != n_groups:
        raise FormatError(
            f"need one substream per group: {len(substreams)} != {n_groups}")
    _check_range("mask segment length", len(mask_rle), _U32)
    _check_range("z segment length", len(z_stream), _U32)
    for g, salt in encryption.items():
        if not 0 <= g < n_groups:
            raise FormatError(f"encryption directive for unknown group {g}")
        _check_range("key_salt", salt, _U64)

    flags = (FLAG_NO_GI if gi_disabled else 0) \
        | (FLAG_NO_CHARM if charm_disabled else 0)
    records = []
    offset = 0
    for g, sub in enumerate(substreams):
        _check_range(f"group {g} substream length", len(sub), _U32)
        records.append(GroupRecord(
            group_id=g, encrypted=g in encryption,
            key_salt=encryption.get(g, 0), offset=offset, length=len(sub)))
        offset += len(sub)
    file = SsbFile(version=VERSION, flags=flags, image_h=image_h,
                   image_w=image_w, block_size=block_size, n_groups=n_groups,
                   latent_channels=latent_channels, slices=slices,
                   weights_digest=weights_digest, mask_rle=bytes(mask_rle),
                   z_stream=bytes(z_stream), records=tuple(records),
                   blob=b"".join(bytes(s) for s in substreams))
    return _emit(file)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file: {what} needs {n} bytes at "
                              f"offset {self.pos}, file has {len(self.data)}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def read_ssb(data: bytes) -> SsbFile:
    """Parse and fully validate a container; structural damage raises
    FormatError, never anything unstructured."""
    rd = _Reader(bytes(data))
    (magic, version, flags, image_h, image_w, block_size, n_groups,
     latent_channels, slices, digest) = _HEADER.unpack(rd.take(HEADER_SIZE, "header"))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CompatibilityError(f"unsupported container version {version}")
    if flags & ~_KNOWN_FLAGS:
        raise FormatError(f"unknown flag bits 0x{flags & ~_KNOWN_FLAGS:02x}")
    if min(image_h, image_w, block_size, n_groups,
           latent_channels, slices) < 1:
        raise FormatError("header counts and dimensions must be positive")

    present = list(range(n_groups))
    if flags & FLAG_PARTIAL:
        bitmap = rd.take((n_groups + 7) // 8, "presence bitmap")
        present = [g for g in range(n_groups) if bitmap[g // 8] >> (g % 8) & 1]
        for bit in range(n_groups, 8 * len(bitmap)):
            if bitmap[bit // 8] >> (bit % 8) & 1:
                raise FormatError(f"presence bitmap sets out-of-range bit {bit}")

    mask_rle = rd.take(rd.u32("mask segment length"), "mask segment")
    z_stream = rd.take(rd.u32("z segment length"), "z segment")

    records = []
    for i, gid in enumerate(present):
        group_id, encrypted, key_salt, offset, length = _RECORD.unpack(
            rd.take(RECORD_SIZE, f"group record {i}"))
        if group_id != gid:
            raise FormatError(
                f"record {i}: group id {group_id}, expected {gid} "
                "(ascending, matching the presence set)")
        if encrypted not in (0, 1):
            raise FormatError(f"group {group_id}: encrypted flag {encrypted}")
        records.append(GroupRecord(group_id=group_id, encrypted=bool(encrypted),
                                   key_salt=key_salt, offset=offset, length=length))

    blob = rd.data[rd.pos:]
    expected_offset = 0
    for r in records:
        if r.offset != expected_offset:
            raise FormatError(
                f"group {r.group_id}: offset {r.offset}, expected "
                f"{expected_offset} (substreams must tile the blob)")
        expected_offset += r.length
    if expected_offset != len(blob):
        raise FormatError(
            f"blob is {len(blob)} bytes but records cover {expected_offset}")

    return SsbFile(version=version, flags=flags, image_h=image_h,
                   image_w=image_w, block_size=block_size, n_groups=n_groups,
                   latent_channels=latent_channels, slices=slices,
                   weights_digest=digest, mask_rle=mask_rle, z_stream=z_stream,
                   records=tuple(records), blob=blob)


def extract_groups(data: bytes, selection) -> bytes:
    """New SSB keeping only the selected substreams; shared segments intact.

    Ids outside [0, N) are selection errors; ids that are valid but already
    absent are dropped silently, which makes extraction compositional:
    extract(extract(f, P), Q) == extract(f, P & Q).
    """
    file = read_ssb(data)
    wanted = set(int(g) for g in selection)
    for g in wanted:
        if not 0 <= g < file.n_groups:
            raise SelectionError(
                f"group {g} outside [0, {file.n_groups})")
    kept = [r for r in file.records if r.group_id in wanted]

    offset = 0
    new_records = []
    parts = []
    for r in kept:
        parts.append(file.blob[r.offset:r.offset + r.length])
        new_records.append(replace(r, offset=offset))
        offset += r.length
    partial = replace(file, flags=file.flags | FLAG_PARTIAL,
                      records=tuple(new_records), blob=b"".join(parts))
    return _emit(partial)


def segment_layout(data: bytes) -> list[tuple[str, int, int]]:
    """(name, offset, length) for every segment; they tile the file exactly."""
    file = read_ssb(data)
    out = [("header", 0, HEADER_SIZE)]
    pos = HEADER_SIZE
    if file.is_partial:
        n = (file.n_groups + 7) // 8
        out.append(("presence-bitmap", pos, n))
        pos += n
    out.append(("mask", pos, 4 + len(file.mask_rle)))
    pos += 4 + len(file.mask_rle)
    out.append(("z", pos, 4 + len(file.z_stream)))
    pos += 4 + len(file.z_stream)
    out.append(("group-table", pos, RECORD_SIZE * len(file.records)))
    pos += RECORD_SIZE * len(file.records)
    for r in file.records:
        out.append((f"substream[{r.group_id}]", pos + r.offset, r.length))
    return out
