"""Deterministic sub-seed derivation.

Every randomized stage (splitting, weight init, epoch shuffles, permutation
shuffles, search trials) draws its own RNG stream from the single top-level
seed. The rule: sub-seed = first 8 bytes (big-endian) of
sha256("<seed>|<tag1>|<tag2>|...") — stable across platforms and runs.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *tags) -> int:
    text = "|".join([str(int(seed))] + [str(t) for t in tags])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def rng_for(seed: int, *tags) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *tags))
