"""64-bit FNV-1a and SplitMix64, shared by weight digests and keyed permutations."""

from __future__ import annotations

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def _fnv1a64_py(data: bytes, h: int = _FNV_OFFSET) -> int:
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _U64
    return h


try:  # the compiled range-coder module carries a fast digest loop
    from ._rc import fnv1a64_update as _fnv1a64_impl
except ImportError:
    _fnv1a64_impl = _fnv1a64_py


def fnv1a64(data: bytes, h: int = _FNV_OFFSET) -> int:
    """FNV-1a over data, optionally continuing from a previous state."""
    return _fnv1a64_impl(bytes(data), h)


class SplitMix64:
    """Deterministic 64-bit stream used for keyed permutations."""

    def __init__(self, seed: int):
        self._state = seed & _U64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _U64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform draw in [0, n) by rejection; unbiased for any n >= 1."""
        if n <= 0:
            raise ValueError(f"below() needs n >= 1, got {n}")
        if n == 1:
            return 0
        limit = (_U64 + 1) - ((_U64 + 1) % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n
