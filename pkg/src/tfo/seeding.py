"""Deterministic seed derivation with the splitmix64 finalizer."""

from __future__ import annotations

import zlib

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def name_key(name: str) -> int:
    """Stable 32-bit key for a string (CRC-32), independent of hash randomization."""
    return zlib.crc32(name.encode("utf-8"))


def derive_seed(master: int, *keys: int | str) -> int:
    """Fold ``keys`` into ``master`` one splitmix64 round at a time.

    Strings go through :func:`name_key`, so a policy's seed depends on its name
    and not on its position in a list.
    """
    h = splitmix64(master & MASK64)
    for k in keys:
        if isinstance(k, str):
            k = name_key(k)
        h = splitmix64(h ^ (k & MASK64))
    return h
