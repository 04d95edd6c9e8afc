"""Single graph-convolution layers on unbatched matrices.

These are the reference definitions. The batched training path in
:mod:`efcnet.model.network` computes the same quantities with fused
kernels and is tested against these functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ShapeMismatch

Activation = Callable[[np.ndarray], np.ndarray]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def identity(x: np.ndarray) -> np.ndarray:
    return x


@dataclass
class LayerWeights:
    """Self weight ``w0`` and aggregated-neighbour weight ``w1``."""

    w0: np.ndarray
    w1: np.ndarray


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeMismatch(msg)


def _propagate(h_self, w0, agg, w1, act):
    _check(h_self.shape[1] == w0.shape[0], f"features {h_self.shape} do not match W0 {w0.shape}")
    _check(agg.shape[1] == w1.shape[0], f"aggregated features {agg.shape} do not match W1 {w1.shape}")
    _check(w0.shape[1] == w1.shape[1], f"W0 {w0.shape} and W1 {w1.shape} disagree on output width")
    _check(h_self.shape[0] == agg.shape[0], f"row counts differ: {h_self.shape[0]} vs {agg.shape[0]}")
    return act(h_self @ w0 + agg @ w1)


def gcn_layer(h: np.ndarray, adjacency: np.ndarray, w: LayerWeights, act: Activation = relu) -> np.ndarray:
    """``act(H W0 + A H W1)``."""
    _check(adjacency.shape == (h.shape[0], h.shape[0]), f"adjacency {adjacency.shape} does not match {h.shape[0]} nodes")
    return _propagate(h, w.w0, adjacency @ h, w.w1, act)


def co_embed_node_layer(h: np.ndarray, efc_proj: np.ndarray, w: LayerWeights, act: Activation = relu) -> np.ndarray:
    """Node update driven by projected edge connectivity: ``act(H W0 + Phi(E) H W1)``."""
    _check(efc_proj.shape == (h.shape[0], h.shape[0]), f"projected eFC {efc_proj.shape} does not match {h.shape[0]} nodes")
    return _propagate(h, w.w0, efc_proj @ h, w.w1, act)


def edge_layer(
    h_edge: np.ndarray,
    h_node: np.ndarray,
    incidence: np.ndarray,
    w: LayerWeights,
    act: Activation = relu,
) -> np.ndarray:
    """Edge update from its two endpoints: ``act(H_e W0 + B^T H_v W1)``."""
    _check(
        incidence.shape == (h_node.shape[0], h_edge.shape[0]),
        f"incidence {incidence.shape} does not match {h_node.shape[0]} nodes and {h_edge.shape[0]} edges",
    )
    return _propagate(h_edge, w.w0, incidence.T @ h_node, w.w1, act)
