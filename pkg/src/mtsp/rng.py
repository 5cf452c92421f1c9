"""Deterministic RNG substreams.

Every stochastic component draws from its own numpy Generator, derived from the
master seed and an integer key path via SeedSequence spawn keys.  Streams are
therefore independent of scheduling: an evaluation keyed by (generation, slot)
sees the same draws no matter how many workers run or in which order results
arrive.

Key path phase codes (first element of the path):
  0 initial population      (0, slot)
  1 generation operators    (1, generation)
  2 individual evaluation   (2, generation, slot)
  3 simulation run          appended run index, see `substream`
"""

from __future__ import annotations

import numpy as np

PHASE_INIT = 0
PHASE_GEN = 1
PHASE_EVAL = 2
PHASE_SIM = 3


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Return the Generator for `path` under `master_seed`.

    Same (master_seed, path) -> same stream, always.
    """
    if any(p < 0 for p in path):
        raise ValueError(f"substream path must be non-negative: {path}")
    seq = np.random.SeedSequence(master_seed, spawn_key=tuple(path))
    return np.random.Generator(np.random.PCG64(seq))
