"""Per-subject brain graphs and the edge-to-node projection of eFC matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .connectivity import edge_fc, node_fc
from .errors import InvalidInput, ShapeMismatch
from .timeseries import as_timeseries, edge_time_series, n_edges, pair_indices, zscore

_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class BrainGraph:
    """Node features ``A_v`` (N x N), eFC edge features ``A_e`` (N_e x N_e),
    weighted adjacency ``W`` (N x N) and an integer class label."""

    node_features: np.ndarray
    edge_features: np.ndarray
    adjacency: np.ndarray
    label: int

    @property
    def n_regions(self) -> int:
        return self.node_features.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edge_features.shape[0]

    def validate(self) -> "BrainGraph":
        n = self.n_regions
        for name, mat, size in (
            ("node_features", self.node_features, n),
            ("edge_features", self.edge_features, n_edges(n)),
            ("adjacency", self.adjacency, n),
        ):
            if mat.shape != (size, size):
                raise ShapeMismatch(f"{name} has shape {mat.shape}, expected {(size, size)}")
            if not np.all(np.isfinite(mat)):
                raise InvalidInput(f"{name} contains non-finite values")
            if not np.allclose(mat, mat.T, rtol=0, atol=_TOL):
                raise InvalidInput(f"{name} is not symmetric")
        for name, mat in (("node_features", self.node_features), ("edge_features", self.edge_features)):
            if not np.allclose(np.diagonal(mat), 1.0, rtol=0, atol=_TOL):
                raise InvalidInput(f"{name} must have a unit diagonal")
            if np.abs(mat).max() > 1 + _TOL:
                raise InvalidInput(f"{name} has entries outside [-1, 1]")
        if np.any(np.diagonal(self.adjacency) != 0):
            raise InvalidInput("adjacency must have a zero diagonal")
        return self


def build_graph(ts, label: int) -> BrainGraph:
    """Assemble a subject graph: Pearson nFC, eFC, and ``W = |nFC|`` without self-loops."""
    x = as_timeseries(ts)
    a_v = node_fc(x)
    a_e = edge_fc(edge_time_series(zscore(x)))
    w = np.abs(a_v)
    np.fill_diagonal(w, 0.0)
    return BrainGraph(a_v, a_e, w, int(label))


def incidence_matrix(n_regions: int) -> np.ndarray:
    """``N x N_e`` 0/1 matrix with ``B[n, e] = 1`` iff region ``n`` is an endpoint of edge ``e``."""
    if n_regions < 2:
        raise InvalidInput(f"need at least 2 regions, got {n_regions}")
    rows, cols = pair_indices(n_regions)
    b = np.zeros((n_regions, rows.size))
    edges = np.arange(rows.size)
    b[rows, edges] = 1.0
    b[cols, edges] = 1.0
    return b


def phi_project(efc, incidence) -> np.ndarray:
    """Project an ``N_e x N_e`` edge matrix onto node pairs.

    ``out[u, v]`` is the mean of ``efc[e, f]`` over all edges ``e`` touching
    ``u`` and ``f`` touching ``v``: ``D^-1 B E B^T D^-1`` with ``D`` the
    node degrees.
    """
    e = np.asarray(efc, dtype=np.float64)
    b = np.asarray(incidence, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] != e.shape[1] or b.ndim != 2 or b.shape[1] != e.shape[0]:
        raise ShapeMismatch(f"cannot project edge matrix {e.shape} with incidence {b.shape}")
    deg = b.sum(axis=1)
    return (b @ e @ b.T) / np.outer(deg, deg)
