"""Counter-based random streams for reproducible parallel Monte Carlo.

A master seed expands into one independent substream per (path, component)
pair through the Philox counter-based generator: the 128-bit Philox key is
``[master_seed, component << 56 | path_index]``.  Streams are therefore addressable: regenerating path 17's Brownian
increments never requires drawing paths 0..16, and identical seeds
reproduce identical scenarios bit for bit regardless of how work is
scheduled.
"""

from __future__ import annotations

import numpy as np

REGIME = 1
BROWNIAN = 2
JUMPS = 3

_MAX_PATHS = 1 << 56


def substream(master_seed: int, path_index: int, component: int) -> np.random.Generator:
    """Return the dedicated generator for one (path, component) pair."""
    if not 0 <= master_seed < (1 << 63):
        raise ValueError("master_seed must fit in 63 bits")
    if not 0 <= path_index < _MAX_PATHS:
        raise ValueError("path_index out of range")
    key = np.array(
        [master_seed, (np.uint64(component) << np.uint64(56)) | np.uint64(path_index)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
