# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled range coder backend.

Same carry-less 32-bit state machine as _rc_py.py; the two must stay
byte-identical.  C unsigned arithmetic provides the mod-2^32 wrapping the
Python backend gets from masking.
"""

from libc.stdint cimport uint8_t, uint32_t, uint64_t

import numpy as np

from ..errors import CorruptStreamError

cdef uint32_t TOP = 1u << 24
cdef uint32_t BOT = 1u << 16

BACKEND_NAME = "compiled"


cdef class RangeEncoder:
    cdef uint32_t low
    cdef uint32_t rng
    cdef uint32_t tot
    cdef bytearray out

    def __init__(self, int precision=16):
        self.tot = 1u << precision
        self.low = 0
        self.rng = 0xFFFFFFFFu
        self.out = bytearray()

    cdef void _put(self, uint32_t cum, uint32_t freq):
        cdef uint32_t r = self.rng // self.tot
        cdef uint32_t low = self.low + r * cum
        cdef uint32_t rng = r * freq
        while True:
            if (low ^ (low + rng)) < TOP:
                pass
            elif rng < BOT:
                rng = (-low) & (BOT - 1)
            else:
                break
            self.out.append(low >> 24)
            low <<= 8
            rng <<= 8
        self.low = low
        self.rng = rng

    def encode(self, cum, freq):
        self._put(<uint32_t> cum, <uint32_t> freq)

    def finish(self):
        cdef uint32_t low = self.low
        cdef int i
        for i in range(4):
            self.out.append(low >> 24)
            low <<= 8
        return bytes(self.out)


cdef class RangeDecoder:
    cdef uint32_t low
    cdef uint32_t rng
    cdef uint32_t code
    cdef uint32_t tot
    cdef uint32_t _r
    cdef const uint8_t[::1] data
    cdef Py_ssize_t pos
    cdef object _keepalive

    def __init__(self, data, int precision=16):
        if len(data) < 4:
            raise CorruptStreamError(f"substream of {len(data)} bytes, need >= 4")
        self._keepalive = bytes(data)
        self.data = self._keepalive
        self.tot = 1u << precision
        self.pos = 4
        self.code = ((<uint32_t> self.data[0]) << 24) | ((<uint32_t> self.data[1]) << 16) \
            | ((<uint32_t> self.data[2]) << 8) | (<uint32_t> self.data[3])
        self.low = 0
        self.rng = 0xFFFFFFFFu

    cdef uint32_t _next_byte(self):
        cdef uint32_t b = 0
        if self.pos < self.data.shape[0]:
            b = self.data[self.pos]
        self.pos += 1
        return b

    cdef uint32_t _get_cum(self):
        self._r = self.rng // self.tot
        cdef uint32_t tmp = (self.code - self.low) // self._r
        if tmp > self.tot - 1:
            tmp = self.tot - 1
        return tmp

    cdef void _update(self, uint32_t cum, uint32_t freq):
        cdef uint32_t low = self.low + self._r * cum
        cdef uint32_t rng = self._r * freq
        cdef uint32_t code = self.code
        while True:
            if (low ^ (low + rng)) < TOP:
                pass
            elif rng < BOT:
                rng = (-low) & (BOT - 1)
            else:
                break
            code = (code << 8) | self._next_byte()
            low <<= 8
            rng <<= 8
        self.low = low
        self.rng = rng
        self.code = code

    def decode_cum(self):
        return self._get_cum()

    def update(self, cum, freq):
        self._update(<uint32_t> cum, <uint32_t> freq)


def encode_block(RangeEncoder enc, residuals, scales, cdfs, int bound):
    cdef const int[::1] res = np.ascontiguousarray(residuals, dtype=np.int32)
    cdef const int[::1] sc = np.ascontiguousarray(scales, dtype=np.int32)
    cdef const uint32_t[:, ::1] tab = np.ascontiguousarray(cdfs, dtype=np.uint32)
    cdef Py_ssize_t i, row, sym
    for i in range(res.shape[0]):
        row = sc[i]
        sym = res[i] + bound
        enc._put(tab[row, sym], tab[row, sym + 1] - tab[row, sym])


def decode_block(RangeDecoder dec, scales, cdfs, int bound):
    cdef const int[::1] sc = np.ascontiguousarray(scales, dtype=np.int32)
    cdef const uint32_t[:, ::1] tab = np.ascontiguousarray(cdfs, dtype=np.uint32)
    cdef Py_ssize_t n = sc.shape[0]
    cdef Py_ssize_t n_sym = tab.shape[1] - 1
    out_arr = np.empty(n, dtype=np.int32)
    cdef int[::1] out = out_arr
    cdef Py_ssize_t i, row, lo, hi, mid
    cdef uint32_t tmp
    for i in range(n):
        row = sc[i]
        tmp = dec._get_cum()
        lo = 0
        hi = n_sym
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if tab[row, mid] <= tmp:
                lo = mid
            else:
                hi = mid
        dec._update(tab[row, lo], tab[row, lo + 1] - tab[row, lo])
        out[i] = <int> (lo - bound)
    return out_arr


def fnv1a64_update(data, h):
    cdef const uint8_t[::1] buf = data
    cdef uint64_t state = <uint64_t> h
    cdef Py_ssize_t i
    for i in range(buf.shape[0]):
        state = (state ^ buf[i]) * 0x100000001B3u
    return state
