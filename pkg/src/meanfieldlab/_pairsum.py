"""
Parallel O(N^2) pair sums compiled with numba.

Each particle ``i`` owns its row of the sum and loops over ``j`` in a fixed
order, so results are bit-identical for any thread count. ``fastmath`` stays
off so that floating point reductions are not reassociated.
"""

import contextlib
from collections.abc import Iterator

import numba
import numpy as np
from numba import njit, prange


@contextlib.contextmanager
def thread_count(workers: int | None) -> Iterator[int]:
    """Temporarily run numba parallel regions on ``workers`` threads."""
    previous = numba.get_num_threads()
    wanted = previous if workers is None else max(1, int(workers))
    wanted = min(wanted, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(wanted)
    try:
        yield wanted
    finally:
        numba.set_num_threads(previous)


@njit(parallel=True, fastmath=False, cache=True)
def raw_gradient_sum(positions, s):
    """``sum_{j != i} grad g_s(x_i - x_j)`` for the raw kernel."""
    n, d = positions.shape
    out = np.zeros((n, d))
    c = s if s > 0 else 1.0
    exponent = -(s + 2.0) / 2.0
    for i in prange(n):
        for j in range(n):
            if j == i:
                continue
            r2 = 0.0
            for k in range(d):
                diff = positions[i, k] - positions[j, k]
                r2 += diff * diff
            scale = -c * r2**exponent
            for k in range(d):
                out[i, k] += scale * (positions[i, k] - positions[j, k])
    return out


@njit(fastmath=False, cache=True)
def _tabulated_slope(r, nodes, coefficients, r_min, r_max, h_min, s):
    if r < r_min:
        return h_min
    if r > r_max:
        c = s if s > 0 else 1.0
        return -c * r ** (-s - 2.0)
    u = np.log(r)
    index = np.searchsorted(nodes, u) - 1
    if index < 0:
        index = 0
    if index > nodes.shape[0] - 2:
        index = nodes.shape[0] - 2
    du = u - nodes[index]
    return (
        (coefficients[0, index] * du + coefficients[1, index]) * du
        + coefficients[2, index]
    ) * du + coefficients[3, index]


@njit(parallel=True, fastmath=False, cache=True)
def tabulated_gradient_sum(positions, nodes, coefficients, r_min, r_max, h_min, s):
    """``sum_{j != i} grad g^eps(x_i - x_j)`` from a radial slope table."""
    n, d = positions.shape
    out = np.zeros((n, d))
    for i in prange(n):
        for j in range(n):
            if j == i:
                continue
            r2 = 0.0
            for k in range(d):
                diff = positions[i, k] - positions[j, k]
                r2 += diff * diff
            h = _tabulated_slope(
                np.sqrt(r2), nodes, coefficients, r_min, r_max, h_min, s
            )
            for k in range(d):
                out[i, k] += h * (positions[i, k] - positions[j, k])
    return out


@njit(parallel=True, fastmath=False, cache=True)
def _row_minima(positions):
    n, d = positions.shape
    best = np.full(n, np.inf)
    partner = np.full(n, -1, dtype=np.int64)
    for i in prange(n):
        for j in range(i + 1, n):
            r2 = 0.0
            for k in range(d):
                diff = positions[i, k] - positions[j, k]
                r2 += diff * diff
            if r2 < best[i]:
                best[i] = r2
                partner[i] = j
    return best, partner


def min_pair_distance(positions: np.ndarray) -> tuple[float, int, int]:
    """Smallest pairwise distance and the first pair (in row order) attaining it."""
    if len(positions) < 2:
        return np.inf, -1, -1
    best, partner = _row_minima(np.ascontiguousarray(positions, dtype=np.float64))
    i = int(np.argmin(best))
    return float(np.sqrt(best[i])), i, int(partner[i])
