"""Keyed random substreams.

Every stochastic call site draws from a generator derived from the run seed
and a tuple of keys (agent id, task id, attempt index, ...).  Results never
depend on evaluation order, and a run can be resumed from any step without
serializing generator positions: the step index is the position.
"""

from __future__ import annotations

import hashlib

import numpy as np


def key_hash(*keys: object) -> int:
    digest = hashlib.blake2b(repr(tuple(str(k) for k in keys)).encode("utf-8"), digest_size=16)
    return int.from_bytes(digest.digest(), "little")


def substream(seed: int, *keys: object) -> np.random.Generator:
    """Independent PCG64 generator for ``(seed, *keys)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), key_hash(*keys)])))
