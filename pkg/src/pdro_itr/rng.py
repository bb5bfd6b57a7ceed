"""Seeded random streams.

All randomness flows through Philox, a counter-based 64-bit generator, so
that every dataset, weight initialization and Dirichlet draw is reproducible
from an integer seed. Each purpose gets its own stream: the Philox key is
``seed * 65536 + stream``, which keeps streams disjoint across seeds as long
as stream codes stay below 65536.
"""

import numpy as np

from .errors import ParameterError

# Stream codes, one per purpose.
STREAM_COVARIATES = 1
STREAM_TREATMENT = 2
STREAM_NOISE = 3
STREAM_DIRICHLET = 4
STREAM_MEMBERSHIP = 5
STREAM_INIT = 6
STREAM_SHUFFLE = 7


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Return the Generator for a (seed, purpose-stream) pair."""
    if seed < 0:
        raise ParameterError(f"seed must be nonnegative, got {seed}")
    return np.random.Generator(np.random.Philox(key=seed * 65536 + stream))
