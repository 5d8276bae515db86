"""
Seeded, counter-based random streams.

Every stream is a numpy Generator over the Philox bit generator, so the same seed and the same call sequence always
reproduce the same draws on every platform.
"""
import numpy as np

Rng = np.random.Generator


def make_rng(seed: int) -> Rng:
    if seed < 0 or seed >= 2 ** 64:
        raise ValueError('seed must be a 64-bit unsigned integer, got {}'.format(seed))
    return np.random.Generator(np.random.Philox(key=seed))


def derive_seed(seed: int, *keys: int) -> int:
    """
    Derives an independent child seed, e.g. one per random problem or per sweep run.
    """
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=tuple(keys))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def child_rng(seed: int, *keys: int) -> Rng:
    return make_rng(derive_seed(seed, *keys))
