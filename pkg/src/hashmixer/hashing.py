"""Deterministic 64-bit hash family and MinHash primitives.

Everything here is a pure function of its inputs and wraps at 64 bits, so the
same strings produce the same values on every platform and in every run. The
family is splitmix64 applied to an FNV-1a digest XORed with a per-function
seed; seeds themselves derive from splitmix64, so a family is fully determined
by its size.

A *fingerprint* is a uint64 ndarray of shape ``(n,)``: entry ``i`` is the
minimum of hash function ``i`` over the character trigrams of a subword unit
(or the hash of the whole unit for ``##`` continuations).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_SPLITMIX_MUL1 = 0xBF58476D1CE4E5B9
_SPLITMIX_MUL2 = 0x94D049BB133111EB


def fnv1a64(data: bytes) -> int:
    """FNV-1a over raw bytes with wrapping 64-bit arithmetic."""
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & MASK64
    return h


def splitmix64(x: int) -> int:
    """One splitmix64 step: add the golden-ratio gamma, then mix."""
    z = (x + _SPLITMIX_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * _SPLITMIX_MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _SPLITMIX_MUL2) & MASK64
    return z ^ (z >> 31)


def splitmix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorized :func:`splitmix64` over a uint64 ndarray."""
    z = x.astype(np.uint64, copy=True)
    z += np.uint64(_SPLITMIX_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_SPLITMIX_MUL1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_SPLITMIX_MUL2)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class HashFamily:
    """A family of ``size_n`` hash functions over strings.

    ``seeds[i] = splitmix64(i + 1)``, so two families of equal size are
    identical and no state needs to be stored or shipped.
    """

    size_n: int
    seeds: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.size_n < 1:
            raise ValueError(f"hash family needs size_n >= 1, got {self.size_n}")
        seeds = np.array([splitmix64(i + 1) for i in range(self.size_n)], dtype=np.uint64)
        seeds.setflags(write=False)
        object.__setattr__(self, "seeds", seeds)


def string_hash(family: HashFamily, i: int, s: str) -> int:
    """Hash function ``i`` of the family applied to ``s``."""
    if not 0 <= i < family.size_n:
        raise IndexError(f"hash index {i} outside family of size {family.size_n}")
    return splitmix64(fnv1a64(s.encode("utf-8")) ^ int(family.seeds[i]))


def all_hashes(family: HashFamily, s: str) -> np.ndarray:
    """All ``size_n`` hash values of ``s``, as a uint64 array."""
    base = np.uint64(fnv1a64(s.encode("utf-8")))
    return splitmix64_array(base ^ family.seeds)


def char_trigrams(s: str) -> list[str]:
    """Contiguous windows of 3 Unicode scalars; whole string if shorter."""
    if not s:
        raise ValueError("cannot extract trigrams from an empty string")
    if len(s) < 3:
        return [s]
    return [s[i : i + 3] for i in range(len(s) - 2)]


def minhash_unit(family: HashFamily, unit: str, is_continuation: bool = False) -> np.ndarray:
    """MinHash fingerprint of one subword unit.

    Head units hash their character trigrams and keep the per-function
    minimum; continuation units (``##`` prefix included in the hashed text)
    hash the whole string directly.
    """
    if not unit:
        raise ValueError("cannot fingerprint an empty subword unit")
    if is_continuation:
        return all_hashes(family, unit)
    grams = char_trigrams(unit)
    fnvs = np.array([fnv1a64(g.encode("utf-8")) for g in grams], dtype=np.uint64)
    table = splitmix64_array(fnvs[:, None] ^ family.seeds[None, :])
    return table.min(axis=0)
