"""Deterministic per-task random streams.

All randomness in the package flows through :func:`stream`, which derives an
independent counter-based Philox generator from a master seed and an integer
path (stage id, replicate index, ...).  Streams derived from the same
``(seed, *path)`` are identical across runs and machines, and distinct paths
give statistically independent streams, so replicate loops may be evaluated
in any order (or in parallel) without changing results.
"""

import numpy as np

# Stage ids keep streams for different pipeline stages disjoint even when
# they share a replicate index.
STAGE_RESAMPLE = 1
STAGE_MODE_BOOT = 2
STAGE_SHARPEN = 3
STAGE_BRIDGE = 4
STAGE_LIMIT_Z = 5
STAGE_BUMP = 6
STAGE_DATA = 7


def stream(seed, *path):
    """Return a ``numpy.random.Generator`` for the given seed and path."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
