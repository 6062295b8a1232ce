"""Keyed permutations that scramble a group's coded sequence.

The shuffle hides a group's content from anyone without the key while the
substream stays validly decodable, so partial transmission and keyless
inspection keep working.  It is obfuscation, not encryption in the
cryptographic sense.
"""

from __future__ import annotations

import struct

import numpy as np

from .hashing import SplitMix64, fnv1a64


def permutation_seed(key: bytes, group_id: int, key_salt: int) -> int:
    return fnv1a64(bytes(key) + struct.pack("<HQ", group_id, key_salt))


def _fisher_yates(stream: SplitMix64, n: int) -> np.ndarray:
    perm = np.arange(n, dtype=np.int64)
    for i in range(n - 1, 0, -1):
        j = stream.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def permutation_from_key(key: bytes, group_id: int, n: int,
                         key_salt: int = 0) -> np.ndarray:
    """Deterministic permutation of [0, n) bound to (key, group, file salt)."""
    if n < 0:
        raise ValueError(f"permutation length must be >= 0, got {n}")
    stream = SplitMix64(permutation_seed(key, group_id, key_salt))
    return _fisher_yates(stream, n)


def keyed_permutations(key: bytes, group_id: int, key_salt: int,
                       lengths: list[int]) -> list[np.ndarray]:
    """One permutation per coding slice, drawn from a single keyed stream.

    Slices are entropy-decoded strictly in order, so each slice's span is
    permuted on its own; the draws continue through one stream so the whole
    sequence remains bound to one seed.  With a single slice this is exactly
    permutation_from_key.
    """
    stream = SplitMix64(permutation_seed(key, group_id, key_salt))
    return [_fisher_yates(stream, n) for n in lengths]


def invert_permutation(perm: np.ndarray) -> np.ndarray:
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size, dtype=perm.dtype)
    return inv


def apply_permutation(perm: np.ndarray, *seqs: np.ndarray) -> tuple[np.ndarray, ...]:
    """Reorder parallel sequences jointly; pairs stay aligned."""
    for s in seqs:
        if s.shape[0] != perm.size:
            raise ValueError(f"sequence length {s.shape[0]} vs permutation {perm.size}")
    return tuple(np.ascontiguousarray(s[perm]) for s in seqs)
