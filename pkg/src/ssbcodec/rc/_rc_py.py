"""Pure-Python range coder backend.

Carry-less 32-bit range coder (Subbotin style): byte-wise renormalization,
no carry propagation, 4-byte flush.  The compiled backend in _rc.pyx
implements the identical state machine; both must produce identical bytes
for identical inputs, which the backend-equivalence tests enforce.
"""

from __future__ import annotations

import numpy as np

from ..errors import CorruptStreamError

M32 = 0xFFFFFFFF
TOP = 1 << 24
BOT = 1 << 16

BACKEND_NAME = "python"


class RangeEncoder:
    def __init__(self, precision: int = 16):
        self.tot = 1 << precision
        self.low = 0
        self.rng = M32
        self.out = bytearray()

    def encode(self, cum: int, freq: int) -> None:
        r = self.rng // self.tot
        low = (self.low + r * cum) & M32
        rng = r * freq
        out = self.out
        while True:
            if (low ^ ((low + rng) & M32)) < TOP:
                pass
            elif rng < BOT:
                rng = (-low) & (BOT - 1)
            else:
                break
            out.append(low >> 24)
            low = (low << 8) & M32
            rng = (rng << 8) & M32
        self.low = low
        self.rng = rng

    def finish(self) -> bytes:
        low = self.low
        for _ in range(4):
            self.out.append(low >> 24)
            low = (low << 8) & M32
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, data: bytes, precision: int = 16):
        if len(data) < 4:
            raise CorruptStreamError(f"substream of {len(data)} bytes, need >= 4")
        self.tot = 1 << precision
        self.data = data
        self.pos = 4
        self.code = int.from_bytes(data[:4], "big")
        self.low = 0
        self.rng = M32

    def _next_byte(self) -> int:
        b = self.data[self.pos] if self.pos < len(self.data) else 0
        self.pos += 1
        return b

    def decode_cum(self) -> int:
        self._r = self.rng // self.tot
        tmp = ((self.code - self.low) & M32) // self._r
        # clamp instead of failing: garbage streams decode to garbage
        # symbols, never to an exception (keyless decode relies on this)
        return min(tmp, self.tot - 1)

    def update(self, cum: int, freq: int) -> None:
        low = (self.low + self._r * cum) & M32
        rng = self._r * freq
        code = self.code
        while True:
            if (low ^ ((low + rng) & M32)) < TOP:
                pass
            elif rng < BOT:
                rng = (-low) & (BOT - 1)
            else:
                break
            code = ((code << 8) | self._next_byte()) & M32
            low = (low << 8) & M32
            rng = (rng << 8) & M32
        self.low = low
        self.rng = rng
        self.code = code


def encode_block(enc: RangeEncoder, residuals: np.ndarray, scales: np.ndarray,
                 cdfs: np.ndarray, bound: int) -> None:
    res = residuals.tolist()
    sc = scales.tolist()
    tables = cdfs.tolist()
    for i in range(len(res)):
        row = tables[sc[i]]
        sym = res[i] + bound
        enc.encode(row[sym], row[sym + 1] - row[sym])


def decode_block(dec: RangeDecoder, scales: np.ndarray, cdfs: np.ndarray,
                 bound: int) -> np.ndarray:
    sc = scales.tolist()
    tables = cdfs.tolist()
    n_sym = cdfs.shape[1] - 1
    out = np.empty(len(sc), dtype=np.int32)
    for i in range(len(sc)):
        row = tables[sc[i]]
        tmp = dec.decode_cum()
        lo, hi = 0, n_sym
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if row[mid] <= tmp:
                lo = mid
            else:
                hi = mid
        dec.update(row[lo], row[lo + 1] - row[lo])
        out[i] = lo - bound
    return out


def fnv1a64_update(data: bytes, h: int) -> int:
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h
