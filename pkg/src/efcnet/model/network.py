"""Co-embedding graph network and the plain GCN baseline.

Both models run on a :class:`GraphBatch`, a stack of subjects sharing the
same region count, and expose ``init`` / ``forward`` / ``backward``. The
backward passes are hand-written reverse-mode derivatives of the mean (or
summed) softmax cross-entropy.

Co-embedding network, per subject with node features ``X = A_v``::

    node branch   Hn = relu(X Wn0 + Phi(A_e) X Wn1)            N   x F
    edge branch   He = relu(r We0 + B^T X We1)                 N_e x F
    readout       h  = mean_nodes(Hn) + mean_edges(He)         F
    logits           = h C + b

where ``r`` is the row mean of ``A_e`` (one scalar per edge). In training
mode dropout acts on ``Hn`` and ``He`` elementwise. The GCN baseline stacks
two ``act(H W0 + W H W1)`` layers, the second one linear and ``C`` wide,
and mean-pools its output into logits.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from ..errors import EmptyDataset, ShapeMismatch
from ..graph import BrainGraph, incidence_matrix, phi_project
from ..timeseries import pair_indices
from .kernels import dropout_params, edge_pool_backward, edge_pool_forward, pool_backward, pool_forward
from .layers import LayerWeights


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class _Params:
    """Flat ``name -> array`` view shared by the optimizer and checkpoints."""

    def named(self) -> dict[str, np.ndarray]:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, LayerWeights):
                out[f"{f.name}.w0"] = value.w0
                out[f"{f.name}.w1"] = value.w1
            else:
                out[f.name] = value
        return out

    @classmethod
    def from_named(cls, arrays: dict[str, np.ndarray]):
        kwargs = {}
        for f in fields(cls):
            if f"{f.name}.w0" in arrays:
                kwargs[f.name] = LayerWeights(arrays[f"{f.name}.w0"], arrays[f"{f.name}.w1"])
            else:
                kwargs[f.name] = arrays[f.name]
        return cls(**kwargs)

    def copy(self):
        return type(self).from_named({k: v.copy() for k, v in self.named().items()})

    def map(self, fn):
        return type(self).from_named({k: fn(v) for k, v in self.named().items()})

    @property
    def n_classes(self) -> int:
        return self.bias.shape[0]


@dataclass
class ModelParams(_Params):
    node_layer: LayerWeights  # w0, w1: N x F
    edge_layer: LayerWeights  # w0: 1 x F, w1: N x F
    classifier: np.ndarray  # F x C
    bias: np.ndarray  # C


@dataclass
class GcnParams(_Params):
    layer1: LayerWeights  # N x F
    layer2: LayerWeights  # F x C
    bias: np.ndarray  # C


@dataclass(frozen=True, eq=False)
class GraphBatch:
    """Precomputed per-subject inputs, stacked along axis 0."""

    node: np.ndarray  # S x N x N, A_v
    phi_node: np.ndarray  # S x N x N, Phi(A_e) @ A_v
    adjacency: np.ndarray  # S x N x N, W
    adj_node: np.ndarray  # S x N x N, W @ A_v
    edge_init: np.ndarray  # S x N_e, row means of A_e
    labels: np.ndarray  # S

    @property
    def n_subjects(self) -> int:
        return self.node.shape[0]

    @property
    def n_regions(self) -> int:
        return self.node.shape[1]

    def subset(self, idx) -> "GraphBatch":
        idx = np.asarray(idx)
        return GraphBatch(*(getattr(self, f.name)[idx] for f in fields(self)))

    @classmethod
    def from_graphs(cls, graphs: Sequence[BrainGraph]) -> "GraphBatch":
        if not graphs:
            raise EmptyDataset("no graphs to batch")
        n = graphs[0].n_regions
        if any(g.n_regions != n for g in graphs):
            raise ShapeMismatch("all graphs in a batch must have the same number of regions")
        inc = incidence_matrix(n)
        node = np.stack([g.node_features for g in graphs]).astype(np.float64)
        adjacency = np.stack([g.adjacency for g in graphs]).astype(np.float64)
        phi = np.stack([phi_project(g.edge_features, inc) for g in graphs])
        return cls(
            node=node,
            phi_node=phi @ node,
            adjacency=adjacency,
            adj_node=adjacency @ node,
            edge_init=np.stack([g.edge_features.mean(axis=1) for g in graphs]),
            labels=np.array([g.label for g in graphs], dtype=np.int64),
        )


def _check_width(batch: GraphBatch, expected: int) -> None:
    if batch.n_regions != expected:
        raise ShapeMismatch(f"model expects {expected} regions, batch has {batch.n_regions}")


def _dropout(train: bool, rate: float, rng):
    return dropout_params(rate if train else 0.0, rng)


class CoEmbedNet:
    name = "coembed"
    params_type = ModelParams

    @staticmethod
    def init(n_regions: int, n_classes: int, hidden: int, rng: np.random.Generator) -> ModelParams:
        return ModelParams(
            node_layer=LayerWeights(glorot(rng, n_regions, hidden), glorot(rng, n_regions, hidden)),
            edge_layer=LayerWeights(glorot(rng, 1, hidden), glorot(rng, n_regions, hidden)),
            classifier=glorot(rng, hidden, n_classes),
            bias=np.zeros(n_classes),
        )

    @staticmethod
    def forward(p: ModelParams, batch: GraphBatch, train: bool = False, dropout: float = 0.0, rng=None):
        n = p.node_layer.w0.shape[0]
        _check_width(batch, n)
        s = batch.n_subjects
        x = batch.node.reshape(s * n, n)
        px = batch.phi_node.reshape(s * n, n)
        drop_node = _dropout(train, dropout, rng)
        drop_edge = _dropout(train, dropout, rng)

        z_node = (x @ p.node_layer.w0 + px @ p.node_layer.w1).reshape(s, n, -1)
        pool_w = np.full((s, 1, n), 1.0 / n)
        pooled_node = pool_forward(z_node, pool_w, *drop_node)[:, 0]

        q = (x @ p.edge_layer.w1).reshape(s, n, -1)
        rows, cols = pair_indices(n)
        w0e = np.ascontiguousarray(p.edge_layer.w0[0])
        pooled_edge = edge_pool_forward(batch.edge_init, q, w0e, rows, cols, *drop_edge)

        h = pooled_node + pooled_edge
        logits = h @ p.classifier + p.bias
        return logits, (batch, z_node, pool_w, q, h, drop_node, drop_edge)

    @staticmethod
    def backward(p: ModelParams, cache, dlogits: np.ndarray) -> ModelParams:
        batch, z_node, pool_w, q, h, drop_node, drop_edge = cache
        s, n, _ = z_node.shape
        d_cls = h.T @ dlogits
        d_bias = dlogits.sum(axis=0)
        dh = np.ascontiguousarray(dlogits @ p.classifier.T)

        dz = pool_backward(z_node, pool_w, *drop_node, dh[:, None, :]).reshape(s * n, -1)
        x = batch.node.reshape(s * n, n)
        px = batch.phi_node.reshape(s * n, n)

        rows, cols = pair_indices(n)
        w0e = np.ascontiguousarray(p.edge_layer.w0[0])
        dq, dw0e = edge_pool_backward(batch.edge_init, q, w0e, rows, cols, *drop_edge, dh)
        return ModelParams(
            node_layer=LayerWeights(x.T @ dz, px.T @ dz),
            edge_layer=LayerWeights(dw0e[None, :], x.T @ dq.reshape(s * n, -1)),
            classifier=d_cls,
            bias=d_bias,
        )


class GcnNet:
    """Two plain graph convolutions, the second linear and ``C`` wide, then a node mean.

    ``mean_n(H W0 + W H W1)`` equals ``mean_n(H) W0 + (c^T H / N) W1`` with
    ``c`` the column sums of ``W``, so the second layer is evaluated on two
    pooled vectors instead of per node.
    """

    name = "gcn"
    params_type = GcnParams

    @staticmethod
    def init(n_regions: int, n_classes: int, hidden: int, rng: np.random.Generator) -> GcnParams:
        return GcnParams(
            layer1=LayerWeights(glorot(rng, n_regions, hidden), glorot(rng, n_regions, hidden)),
            layer2=LayerWeights(glorot(rng, hidden, n_classes), glorot(rng, hidden, n_classes)),
            bias=np.zeros(n_classes),
        )

    @staticmethod
    def forward(p: GcnParams, batch: GraphBatch, train: bool = False, dropout: float = 0.0, rng=None):
        n = p.layer1.w0.shape[0]
        _check_width(batch, n)
        s = batch.n_subjects
        x = batch.node.reshape(s * n, n)
        ax = batch.adj_node.reshape(s * n, n)
        drop = _dropout(train, dropout, rng)
        z1 = (x @ p.layer1.w0 + ax @ p.layer1.w1).reshape(s, n, -1)
        pool_w = np.stack([np.full((s, n), 1.0 / n), batch.adjacency.sum(axis=1) / n], axis=1)
        pooled = pool_forward(z1, pool_w, *drop)
        logits = pooled[:, 0] @ p.layer2.w0 + pooled[:, 1] @ p.layer2.w1 + p.bias
        return logits, (batch, z1, pool_w, pooled, drop)

    @staticmethod
    def backward(p: GcnParams, cache, dlogits: np.ndarray) -> GcnParams:
        batch, z1, pool_w, pooled, drop = cache
        s, n, width = z1.shape
        grad_pool = np.stack([dlogits @ p.layer2.w0.T, dlogits @ p.layer2.w1.T], axis=1)
        dz1 = pool_backward(z1, pool_w, *drop, grad_pool).reshape(s * n, width)
        return GcnParams(
            layer1=LayerWeights(batch.node.reshape(s * n, n).T @ dz1, batch.adj_node.reshape(s * n, n).T @ dz1),
            layer2=LayerWeights(pooled[:, 0].T @ dlogits, pooled[:, 1].T @ dlogits),
            bias=dlogits.sum(axis=0),
        )


MODELS = {CoEmbedNet.name: CoEmbedNet, GcnNet.name: GcnNet}


def get_model(name: str):
    try:
        return MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None


def model_for(params):
    return CoEmbedNet if isinstance(params, ModelParams) else GcnNet


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def loss(logits, label) -> float:
    """Softmax cross-entropy of one logit vector against an integer label."""
    logits = np.asarray(logits, dtype=np.float64)
    return float(-log_softmax(logits)[int(label)])


def cross_entropy(logits: np.ndarray, labels: np.ndarray, reduction: str = "mean"):
    """Batched cross-entropy and its gradient with respect to the logits."""
    logp = log_softmax(logits)
    idx = np.arange(len(labels))
    per = -logp[idx, labels]
    grad = np.exp(logp)
    grad[idx, labels] -= 1.0
    if reduction == "mean":
        return float(per.mean()), grad / len(labels)
    if reduction == "sum":
        return float(per.sum()), grad
    raise ValueError(f"unknown reduction {reduction!r}")


def forward(g: BrainGraph, p, mode: str = "eval", rng=None, dropout: float = 0.0) -> np.ndarray:
    """Logits for a single graph; dropout only acts when ``mode == "train"``."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    logits, _ = model_for(p).forward(p, GraphBatch.from_graphs([g]), mode == "train", dropout, rng)
    return logits[0]


def batch_gradients(p, batch: GraphBatch, reduction: str = "mean"):
    """Loss and exact parameter gradients over a batch, dropout disabled."""
    model = model_for(p)
    logits, cache = model.forward(p, batch)
    value, dlogits = cross_entropy(logits, batch.labels, reduction)
    return value, model.backward(p, cache, dlogits)


def gradients(g: BrainGraph, label: int, p):
    g = BrainGraph(g.node_features, g.edge_features, g.adjacency, int(label))
    return batch_gradients(p, GraphBatch.from_graphs([g]), reduction="sum")[1]


def predict(p, batch: GraphBatch) -> np.ndarray:
    logits, _ = model_for(p).forward(p, batch)
    return logits.argmax(axis=1)
