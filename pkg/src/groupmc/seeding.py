"""Deterministic RNG stream splitting.

All randomness in a run flows from one user-facing seed.  Independent
consumers get their own stream via a (stream id, counter) spawn key, so
adding a consumer never perturbs the draws of existing ones.
"""

from __future__ import annotations

import numpy as np

# Stream ids.  Append only; renumbering breaks reproducibility of old runs.
STREAM_SYNTH = 1
STREAM_FACTOR_INIT = 2
STREAM_SPLIT = 3
STREAM_GROUP_INIT = 4
STREAM_SPECTRAL_USERS = 5
STREAM_SPECTRAL_ITEMS = 6
STREAM_KMEANS = 7


def stream_rng(seed: int, stream: int, counter: int = 0) -> np.random.Generator:
    """Generator for one (seed, stream, counter) cell of the split."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, counter)))
