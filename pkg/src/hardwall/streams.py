"""Counter-based random stream derivation.

Every random quantity in an ensemble is drawn from a stream that depends
only on ``(master_seed, tag, index)``.  Which worker thread handles a
trajectory therefore never changes what it sees.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode())


def seed_sequence(master_seed: int, tag: str, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed) & ((1 << 64) - 1),
                                  spawn_key=(_tag_key(tag), int(index)))


def generator(master_seed: int, tag: str, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, tag, index)))


def generators(master_seed: int, tag: str, count: int, start: int = 0) -> list:
    return [generator(master_seed, tag, i) for i in range(start, start + count)]
