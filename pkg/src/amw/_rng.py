"""Seed splitting.

Every unit of random work (a bootstrap replicate, a CV split, a Monte Carlo
dataset) draws from its own generator, derived from the master seed and a
tuple of integer keys.  Results therefore do not depend on execution order
or on how work is spread over processes.
"""

from __future__ import annotations

import numpy as np


def child_rng(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *keys: int) -> int:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(2, dtype=np.uint32).astype(np.uint64) @ np.array([1 << 32, 1], dtype=np.uint64))
