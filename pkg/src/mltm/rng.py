"""Seeded, splittable random streams.

Every stream is addressed by ``(base_seed, purpose, *ids)`` so that chains and
documents draw the same numbers no matter how work is scheduled.
"""

import hashlib

import numpy as np

# Purpose tags keep streams for different stages disjoint.
TRAIN_PHI = 1
TRAIN_PHI_PRIME = 2
INFER = 3
SYNTH = 4


def stream(seed: int, purpose: int, *ids: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(purpose, *ids))
    return np.random.Generator(np.random.PCG64(seq))


def string_key(s: str) -> int:
    """Stable 63-bit integer for a string (document ids)."""
    return int.from_bytes(hashlib.blake2b(s.encode("utf-8"), digest_size=8).digest(), "little") >> 1
