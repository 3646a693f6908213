"""Seeded random streams derived from one experiment seed by stable labels."""
import zlib

import numpy as np


def stream(seed, label):
    """Independent ``numpy.random.Generator`` for ``(seed, label)``.

    The label is hashed with CRC-32, so the stream does not depend on
    Python's randomised ``hash``.
    """
    key = zlib.crc32(label.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(key,))))


def get_state(rng):
    return rng.bit_generator.state


def set_state(rng, state):
    rng.bit_generator.state = state
    return rng
