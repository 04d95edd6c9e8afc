"""Region time series: validation, z-scoring and edge (co-fluctuation) time series.

Matrices are plain ``numpy`` arrays with time along axis 0 and regions along
axis 1, i.e. a ``T x N`` array. Region pairs ``(i, j)`` with ``i < j`` are
enumerated in lexicographic order, which is also the order produced by
``numpy.triu_indices(N, 1)``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateSeries, IndexOutOfRange, InvalidInput, InvalidPair

# Absolute floor on a region's population standard deviation.
EPS_STD = 1e-12


def as_timeseries(values, *, name: str = "time series") -> np.ndarray:
    """Return ``values`` as a validated float64 ``T x N`` array (T, N >= 2, all finite)."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInput(f"{name} must be a 2-D (time x region) matrix, got {x.ndim}-D")
    t_len, n_regions = x.shape
    if t_len < 2 or n_regions < 2:
        raise InvalidInput(f"{name} needs at least 2 time points and 2 regions, got {t_len}x{n_regions}")
    if not np.all(np.isfinite(x)):
        bad = np.argwhere(~np.isfinite(x))[0]
        raise InvalidInput(f"{name} has a non-finite value at time {bad[0]}, region {bad[1]}")
    return x


def n_edges(n_regions: int) -> int:
    return n_regions * (n_regions - 1) // 2


def pair_indices(n_regions: int) -> tuple[np.ndarray, np.ndarray]:
    """Endpoint arrays ``(I, J)`` such that edge ``e`` joins regions ``I[e] < J[e]``."""
    return np.triu_indices(n_regions, 1)


def pair_to_index(i: int, j: int, n_regions: int) -> int:
    """Lexicographic rank of the pair ``(i, j)``, ``0 <= i < j < n_regions``."""
    if not (0 <= i < j < n_regions):
        raise InvalidPair(f"pair ({i}, {j}) is not a valid edge for {n_regions} regions (need 0 <= i < j < N)")
    return i * n_regions - i * (i + 1) // 2 + (j - i - 1)


def _row_start(i: int, n_regions: int) -> int:
    return i * n_regions - i * (i + 1) // 2


def index_to_pair(e: int, n_regions: int) -> tuple[int, int]:
    """Inverse of :func:`pair_to_index`."""
    total = n_edges(n_regions)
    if not (0 <= e < total):
        raise IndexOutOfRange(f"edge index {e} out of range for {n_regions} regions ({total} edges)")
    # Largest i with row_start(i) <= e; the float estimate is corrected exactly below.
    b = 2 * n_regions - 1
    i = int((b - math.sqrt(b * b - 8 * e)) // 2)
    i = min(max(i, 0), n_regions - 2)
    while _row_start(i, n_regions) > e:
        i -= 1
    while i + 1 <= n_regions - 2 and _row_start(i + 1, n_regions) <= e:
        i += 1
    return i, int(e - _row_start(i, n_regions) + i + 1)


def zscore(ts) -> np.ndarray:
    """Standardize every column to zero mean and unit population standard deviation.

    Raises :class:`DegenerateSeries` naming the first region whose population
    standard deviation does not exceed :data:`EPS_STD`.
    """
    x = as_timeseries(ts)
    mean = x.mean(axis=0)
    centered = x - mean
    std = np.sqrt(np.mean(centered * centered, axis=0))
    flat = np.flatnonzero(std <= EPS_STD)
    if flat.size:
        raise DegenerateSeries(int(flat[0]), float(std[flat[0]]))
    return centered / std


def edge_time_series(zs) -> np.ndarray:
    """Co-fluctuation series: column ``pair_to_index(i, j)`` is ``zs[:, i] * zs[:, j]``.

    Output shape is ``T x N(N-1)/2``.
    """
    z = as_timeseries(zs, name="z-scored matrix")
    rows, cols = pair_indices(z.shape[1])
    return z[:, rows] * z[:, cols]
