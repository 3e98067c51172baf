"""Deterministic per-trial random streams.

Every trajectory, Monte Carlo trial, and calibration run draws from its own
counter-based stream so that parallel and serial execution consume identical
randomness. Streams are Philox generators keyed by the 128-bit SeedSequence
hash of the pair (seed, trial_index); distinct pairs give statistically
independent streams and the output is stable across platforms.
"""

import numpy as np

from .exceptions import ConfigError

_MAX_SEED = 2**64 - 1


def derive_stream(seed: int, trial_index: int = 0) -> np.random.Generator:
    """Return the independent random stream for (seed, trial_index).

    Args:
        seed: run seed, unsigned and below 2**64.
        trial_index: nonnegative trial number within the run.

    Returns:
        numpy Generator backed by Philox, reproducible bitwise.

    Raises:
        ConfigError: seed or trial_index out of range.
    """
    seed = int(seed)
    trial_index = int(trial_index)
    if not 0 <= seed <= _MAX_SEED:
        raise ConfigError(f"seed must be in [0, 2**64), got {seed}")
    if trial_index < 0:
        raise ConfigError(f"trial_index must be nonnegative, got {trial_index}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(trial_index,))
    return np.random.Generator(np.random.Philox(ss))
