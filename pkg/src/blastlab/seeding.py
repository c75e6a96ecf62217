"""Named, order-independent random streams derived from one run seed."""

from __future__ import annotations

import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode())
    return int(k)


def derive_seed(seed: int, *keys) -> int:
    """A 63-bit seed determined by ``seed`` and the key path (strings or ints)."""
    ss = np.random.SeedSequence([int(seed)] + [_key(k) for k in keys])
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def stream(seed: int, *keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *keys)))
