import hashlib

import numpy as np


def stage_key(label: str) -> int:
    """Stable 32-bit key for a stage label"""
    digest = hashlib.md5(label.encode("utf-8")).hexdigest()
    return int(digest, 16) % (2 ** 32)


def derive_seed(seed: int, label: str, *keys: int) -> np.random.SeedSequence:
    """Seed stream for one pipeline stage, independent of every other stage"""
    return np.random.SeedSequence([int(seed) % (2 ** 32), stage_key(label), *[int(k) for k in keys]])


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))
