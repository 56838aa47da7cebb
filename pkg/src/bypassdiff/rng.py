"""Counter-based Gaussian noise streams.

Every noise draw in the pipeline is keyed by (seed, tag) on a Philox
generator, so a draw depends only on its key and never on how many threads
are running or what was drawn before it.  Tags partition the streams:
restoration uses one tag per step, calibration one tag per sample.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def gaussian_field(seed: int, tag: int, shape) -> np.ndarray:
    """Standard-normal array for the (seed, tag) stream; same key, same bits."""
    key = np.array([seed & _MASK64, tag & _MASK64], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.standard_normal(shape)


# Tag layout used by the restoration loop: even tags carry the fresh noise
# injected when stepping onto step t, odd tags carry start-state noise.
def step_tag(t: int) -> int:
    return 2 * t


def init_tag(t: int) -> int:
    return 2 * t + 1
