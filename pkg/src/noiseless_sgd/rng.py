"""Reproducible random streams.

Every run owns a counter-based Philox stream keyed by ``(seed, replicate,
purpose)``. Streams for different replicates or purposes never overlap, so
replicates can be executed in any order (or concurrently) and still yield
bit-identical traces.
"""

from __future__ import annotations

import numpy as np

PRNG_ID = f"numpy-{np.__version__}/Philox4x64-10/SeedSequence"

# purpose tags: keep feature draws and noise draws on separate streams so a
# noisy run shares its features with the noiseless run of the same seed
FEATURES = 0
NOISE = 1
EDGES = 2
POINTS = 3
TARGET = 4

MASK64 = (1 << 64) - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream(seed: int, replicate: int = 0, purpose: int = FEATURES) -> np.random.Generator:
    """Return the generator for one (seed, replicate, purpose) triple."""
    ss = np.random.SeedSequence([check_seed(seed), int(replicate), int(purpose)])
    return np.random.Generator(np.random.Philox(ss))
