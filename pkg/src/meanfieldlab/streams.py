"""
Counter-based random streams.

Every draw is keyed by ``(seed, step)`` through numpy's Philox bit generator,
and per-particle normals are indexed by the particle's canonical label. The
numbers a particle receives therefore depend neither on the order in which
work is scheduled nor on where the particle sits in the position array.
"""

import numpy as np
from numpy.typing import NDArray

# Step counter reserved for drawing initial conditions.
INIT_STEP = 2**64 - 1
# Step counter reserved for estimator resampling.
RESAMPLE_STEP = 2**64 - 2


def generator(seed: int, step: int) -> np.random.Generator:
    """Independent generator for the counter pair ``(seed, step)``."""
    key = np.array([seed, step], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def normal_block(
    seed: int, step: int, labels: NDArray[np.int64], d: int
) -> NDArray[np.float64]:
    """Standard normal ``(len(labels), d)`` block, row ``i`` keyed by ``labels[i]``."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        return np.empty((0, d))
    draws = generator(seed, step).standard_normal((int(labels.max()) + 1, d))
    return draws[labels]


def uniform_block(seed: int, step: int, shape: tuple[int, ...]) -> NDArray[np.float64]:
    """Uniform ``[0, 1)`` draws for the counter pair ``(seed, step)``."""
    return generator(seed, step).random(shape)
