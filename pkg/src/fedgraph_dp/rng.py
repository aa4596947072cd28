"""Seeded, counter-based random streams.

Every randomized component draws from a Philox stream keyed by
``(seed, *key)``, so a trial or a client always sees the same numbers no
matter which worker runs it or in what order.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "derive_seed"]


def _key_part(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"stream key parts must be non-negative, got {part}")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def stream(seed: int, *key) -> np.random.Generator:
    """Independent generator for ``seed`` and a tuple of ints/strings."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_part(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key) -> int:
    """A 63-bit integer seed derived from ``seed`` and ``key``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_part(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
