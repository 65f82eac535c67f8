"""Deterministic random-stream derivation.

Every random draw in the package flows from one config seed. Independent
streams are carved out by hashing string/int tags into a SeedSequence, so
the same (seed, tags) always yields the same generator, on any platform.
"""

from __future__ import annotations

import hashlib

import numpy as np


def seed_sequence(seed: int, *tags) -> np.random.SeedSequence:
    digest = hashlib.sha256("\x1f".join(str(t) for t in tags).encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *words])


def rng_for(seed: int, *tags) -> np.random.Generator:
    """Generator for the stream named by `tags`, derived from the run seed."""
    return np.random.default_rng(seed_sequence(seed, *tags))
