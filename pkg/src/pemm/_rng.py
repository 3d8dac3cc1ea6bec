import zlib

import numpy as np


def derive_seed(seed, label):
    """Independent child seed for a named purpose, stable across runs and platforms."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(label.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_for(seed, label):
    return np.random.default_rng(derive_seed(seed, label))
