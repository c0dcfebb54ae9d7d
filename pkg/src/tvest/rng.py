"""Deterministic, splittable random streams.

Every component draws from its own Philox stream keyed by ``(seed, label)``,
so results never depend on the order in which components are run or on how
work is split across workers.
"""

import hashlib

import numpy as np


def _label_words(label):
    digest = hashlib.blake2b(str(label).encode("utf-8"), digest_size=16).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def stream(seed, label=""):
    """Return a ``numpy.random.Generator`` for the component ``label``."""
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    entropy = [seed & 0xFFFFFFFF, seed >> 32, *_label_words(label)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def child(rng, label):
    """Derive an independent generator from an existing one.

    The parent generator is advanced by exactly one draw.
    """
    seed = int(rng.integers(0, 2**63 - 1))
    return stream(seed, label)


def as_generator(rng):
    if rng is None:
        return stream(0)
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(int(rng))
