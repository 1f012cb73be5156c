"""Named random-number streams.

All randomness in the pipeline flows from one root seed through named
sub-streams so that each stage (splitting, candidate sampling, training)
can be re-run independently without disturbing the others. Per-user
streams are keyed by the user's dense handle, which makes results
independent of processing order.
"""

from __future__ import annotations

import numpy as np

# Stable stream identifiers; never renumber.
STREAM_SPLIT = 1
STREAM_SAMPLING = 2
STREAM_TRAINING = 3
STREAM_SYNTHETIC = 4


def stream_rng(seed: int, stream: int, *keys: int) -> np.random.Generator:
    """Generator for (seed, stream, *keys); distinct keys give independent streams."""
    return np.random.default_rng([int(seed), int(stream), *map(int, keys)])
