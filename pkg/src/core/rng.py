"""
Random streams - counter-based Philox generators split by purpose.

Every stochastic consumer (object sampling, sensor noise, weight init,
diffusion noise, batch shuffling, per-trial rollouts) draws from its own
stream, derived from a base seed and a tuple of keys. Identical keys give
identical streams on every platform.
"""

import hashlib
from typing import Union

import numpy as np

Key = Union[str, int]


def _key_to_int(key: Key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"Stream keys must be non-negative, got {key}")
        return int(key)
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(base_seed: int, *keys: Key) -> int:
    """
    Derive a 64-bit seed from a base seed and a key path.

    Args:
        base_seed: Root seed of the run
        *keys: Purpose keys (strings or non-negative ints)

    Returns:
        Deterministic 64-bit integer seed
    """
    seq = np.random.SeedSequence(entropy=int(base_seed) & (2**64 - 1),
                                 spawn_key=tuple(_key_to_int(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def make_rng(base_seed: int, *keys: Key) -> np.random.Generator:
    """
    Create a Philox-backed generator for a purpose-specific stream.

    Args:
        base_seed: Root seed of the run
        *keys: Purpose keys, e.g. ("noise",) or ("trial", "raspberry", 3)

    Returns:
        numpy Generator
    """
    seq = np.random.SeedSequence(entropy=int(base_seed) & (2**64 - 1),
                                 spawn_key=tuple(_key_to_int(k) for k in keys))
    return np.random.Generator(np.random.Philox(seq))
