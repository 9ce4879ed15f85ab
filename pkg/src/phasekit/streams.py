"""Deterministic counter-based random streams.

Every random draw in the toolkit comes from a generator derived from a user
seed plus an integer key tuple (chunk index, or (m, s, trial, attempt)).
Derivation goes through numpy's SeedSequence spawn keys, whose mixing is
frozen upstream, so results are reproducible independently of execution order
and parallelism.
"""

import numpy as np

__all__ = ["substream"]


def substream(seed, *key):
    """Generator for the stream identified by (seed, *key); keys are ints >= 0."""
    key = tuple(int(k) for k in key)
    if any(k < 0 for k in key):
        raise ValueError("stream key entries must be nonnegative")
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))
