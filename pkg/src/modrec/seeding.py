"""Derivation of named, order-independent RNG substreams from one master seed.

Every random choice in the toolkit (signal generation, channel draws,
augmentation, weight init, batch shuffling, dropout) pulls from a substream
keyed by (master seed, stream name, counters). Streams are independent of
each other and of evaluation order, so per-frame / per-sample work can run
in parallel without changing results.
"""

import zlib

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _key_words(keys):
    words = []
    for key in keys:
        if isinstance(key, str):
            words.append(zlib.crc32(key.encode("utf-8")))
        elif isinstance(key, (int, np.integer)):
            words.append(int(key) & _MASK64)
        else:
            raise TypeError(f"stream key must be str or int, got {type(key).__name__}")
    return words


def seed_sequence(seed, *keys) -> np.random.SeedSequence:
    """SeedSequence for the substream identified by (seed, *keys)."""
    return np.random.SeedSequence([int(seed) & _MASK64] + _key_words(keys))


def substream(seed, *keys) -> np.random.Generator:
    """Independent Generator for the substream identified by (seed, *keys)."""
    return np.random.default_rng(seed_sequence(seed, *keys))


def child_seed(seed, *keys) -> int:
    """64-bit integer seed derived from (seed, *keys), for APIs that take ints."""
    return int(seed_sequence(seed, *keys).generate_state(1, np.uint64)[0])
