"""Deterministic, splittable random streams keyed off one root seed."""
from __future__ import annotations

import zlib

import numpy as np


def _key_int(k) -> int:
    if isinstance(k, (int, np.integer)):
        if k < 0:
            raise ValueError("seed keys must be non-negative")
        return int(k)
    if isinstance(k, float):
        k = repr(k)
    return zlib.crc32(str(k).encode())


def seed_sequence(root_seed: int, *key) -> np.random.SeedSequence:
    """A child stream for ``key``; identical keys give identical streams."""
    return np.random.SeedSequence([int(root_seed) & (2**64 - 1), *map(_key_int, key)])


def make_rng(root_seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(root_seed, *key))


def derived_seed(root_seed: int, *key) -> int:
    """A 63-bit integer seed for recording in manifests."""
    return int(seed_sequence(root_seed, *key).generate_state(1, np.uint64)[0] >> np.uint64(1))
