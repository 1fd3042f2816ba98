"""Deterministic, parallel-safe random streams.

Every stream in the package is keyed by (master seed, integer path) through a
counter-based generator, so any worker can materialize the stream for feature i
or grid cell c directly. Results never depend on how work was scheduled.
"""

from __future__ import annotations

import numpy as np

# Stream domains. Keeping these distinct means a study and the feature maps it
# builds never share a stream even when driven by the same user seed.
FEATURES = 0
DEGREES = 1
FOLDS = 2
PROBES = 3
TARGET = 4
DATA = 5
CELLS = 6
CORRUPT = 7
SPLIT = 8


def substream(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for an integer path under one master seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed: int, *path: int) -> int:
    """Derive a 64-bit seed for a nested component (e.g. a study cell's map)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(2, np.uint32).view(np.uint64)[0])
