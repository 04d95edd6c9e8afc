"""Node (Pearson) and edge functional connectivity matrices."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import BudgetTooSmall, DegenerateEdge, InvalidInput
from .timeseries import EPS_STD, as_timeseries, edge_time_series, index_to_pair, n_edges, zscore

logger = logging.getLogger(__name__)

_F64 = np.dtype(np.float64).itemsize


def node_fc(ts) -> np.ndarray:
    """Pearson correlation between every pair of region time series (``N x N``)."""
    z = zscore(ts)
    fc = (z.T @ z) / z.shape[0]
    np.fill_diagonal(fc, 1.0)
    return fc


def _edge_norms(ets: np.ndarray, sq: np.ndarray) -> np.ndarray:
    norms = np.sqrt(sq)
    bad = np.flatnonzero(norms <= EPS_STD)
    if bad.size:
        e = int(bad[0])
        n_regions = _regions_for_edges(ets.shape[1])
        pair = index_to_pair(e, n_regions) if n_regions else None
        raise DegenerateEdge(e, float(norms[e]), pair)
    return norms


def _regions_for_edges(count: int) -> int | None:
    n = int(round((1 + np.sqrt(1 + 8 * count)) / 2))
    return n if n_edges(n) == count else None


def _as_ets(ets) -> np.ndarray:
    x = np.asarray(ets)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise InvalidInput(f"edge time series must be a non-empty 2-D matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("edge time series contains non-finite values")
    return x


def edge_fc(ets) -> np.ndarray:
    """Cosine similarity between every pair of edge time series columns.

    ``E_FC = (E^T E) / (sqrt(d) sqrt(d)^T)`` with ``d = diag(E^T E)``; the
    result is ``N_e x N_e``, symmetric with unit diagonal. Accumulates in
    float64 regardless of the input dtype.
    """
    x = _as_ets(ets).astype(np.float64, copy=False)
    gram = x.T @ x
    norms = _edge_norms(x, np.diagonal(gram).copy())
    gram /= np.outer(norms, norms)
    np.fill_diagonal(gram, 1.0)
    return gram


def blocked_memory_bytes(t_len: int, n_cols: int, block: int) -> tuple[int, int]:
    """Bytes for ``(output matrix, one tile step)`` of :func:`edge_fc_blocked`.

    A tile step holds two float64 column blocks of ``t_len x block`` plus the
    ``block x block`` product and its normalizer.
    """
    b = min(block, n_cols)
    return n_cols * n_cols * _F64, (2 * t_len * b + 2 * b * b + 2 * b) * _F64


def edge_fc_blocked(
    ets,
    block: int = 512,
    memory_budget: int = 1 << 30,
    threads: int = 1,
) -> np.ndarray:
    """Tiled variant of :func:`edge_fc` for large edge counts.

    Only upper-triangular tiles of ``E^T E`` are formed, one GEMM per pair of
    column blocks, and each is mirrored into the lower triangle. The budget
    is charged for the full output plus ``threads`` concurrent tile steps;
    :class:`BudgetTooSmall` is raised before any work if it does not fit.
    """
    if block < 1:
        raise InvalidInput(f"block size must be >= 1, got {block}")
    if threads < 1:
        raise InvalidInput(f"threads must be >= 1, got {threads}")
    x = _as_ets(ets)
    t_len, n_cols = x.shape
    out_bytes, tile_bytes = blocked_memory_bytes(t_len, n_cols, block)
    if out_bytes + threads * tile_bytes > memory_budget:
        raise BudgetTooSmall(
            f"memory budget {memory_budget} B cannot hold the {n_cols}x{n_cols} output "
            f"({out_bytes} B) plus {threads} tile step(s) of {tile_bytes} B at block size {block}"
        )

    sq = np.einsum("ti,ti->i", x, x, dtype=np.float64)
    norms = _edge_norms(x, sq)
    out = np.empty((n_cols, n_cols), dtype=np.float64)
    starts = list(range(0, n_cols, block))
    tiles = [(a, b) for ia, a in enumerate(starts) for b in starts[ia:]]
    logger.debug("edge_fc_blocked: %d columns, block %d, %d tiles", n_cols, block, len(tiles))

    def run(tile: tuple[int, int]) -> None:
        a, b = tile
        sa, sb = slice(a, min(a + block, n_cols)), slice(b, min(b + block, n_cols))
        xa = x[:, sa].astype(np.float64)
        xb = xa if a == b else x[:, sb].astype(np.float64)
        prod = xa.T @ xb
        prod /= np.outer(norms[sa], norms[sb])
        out[sa, sb] = prod
        if a != b:
            out[sb, sa] = prod.T

    if threads == 1:
        for tile in tiles:
            run(tile)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, tiles))
    np.fill_diagonal(out, 1.0)
    return out


def edge_fc_from_timeseries(ts) -> np.ndarray:
    return edge_fc(edge_time_series(zscore(as_timeseries(ts))))
