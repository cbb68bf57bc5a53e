"""Small shared helpers: CSV float formatting and child-seed derivation."""
from __future__ import annotations

import numpy as np

# 17 significant digits round-trips IEEE-754 doubles exactly.
FLOAT_FMT = ".17g"


def fmt_float(x: float) -> str:
    return format(float(x), FLOAT_FMT)


def child_seeds(master_seed: int, count: int) -> list[np.random.SeedSequence]:
    """Derive one independent child seed per realization index.

    The derivation depends only on (master_seed, index), so realization j
    produces identical results whether it runs sequentially or in a worker
    process.
    """
    return np.random.SeedSequence(master_seed).spawn(count)


def as_rng(seed) -> np.random.Generator:
    """Accept an int seed, a SeedSequence, or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
