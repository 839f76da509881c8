"""Named, independent RNG streams.

A single run seed fans out into one stream per purpose so that, e.g., the
workload generator and the exploration policy never consume the same draws.
Every stream is a PCG64 generator keyed by (seed, stream id).
"""

import numpy as np

STREAM_WORKLOAD = 1
STREAM_EXPLORATION = 2
STREAM_REPLAY = 3


def named_rng(seed: int, stream: int) -> np.random.Generator:
    """Generator for `stream` derived from `seed`; same pair, same draws."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.default_rng(np.random.SeedSequence((seed, stream)))
