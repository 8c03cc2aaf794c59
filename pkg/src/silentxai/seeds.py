"""Seed splitting: every sub-seed is a keyed hash of the master seed and a stage path."""
from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(master: int, *keys) -> int:
    """Return a 64-bit seed from ``master`` and any number of string-able keys.

    Adding a new key elsewhere never changes the seed of an existing path.
    """
    h = hashlib.blake2b(digest_size=8, key=(int(master) & MASK64).to_bytes(8, "little"))
    for k in keys:
        h.update(str(k).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def rng_for(master: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *keys))
