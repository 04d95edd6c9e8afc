"""Full-batch training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .._rng import derive_rng
from ..errors import EmptyDataset, SingleClass
from ..graph import BrainGraph
from .network import GraphBatch, cross_entropy, get_model
from .optim import AdamW

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 1e-4
    weight_decay: float = 5e-4
    dropout: float = 0.5
    hidden_dim: int = 1024
    seed: int = 0
    model: str = "coembed"

    def __post_init__(self):
        if self.epochs < 1 or self.hidden_dim < 1:
            raise ValueError("epochs and hidden_dim must be positive")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and weight_decay must be non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        get_model(self.model)

    @classmethod
    def gcn_baseline(cls, **overrides) -> "TrainConfig":
        """Plain GCN settings: hidden width 512 and dropout 0.3, otherwise as the default."""
        return replace(cls(model="gcn", hidden_dim=512, dropout=0.3), **overrides)


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)

    def rows(self):
        for epoch, (lo, acc) in enumerate(zip(self.loss, self.accuracy), start=1):
            yield epoch, lo, acc


def _as_batch(dataset) -> GraphBatch:
    if isinstance(dataset, GraphBatch):
        return dataset
    if not dataset:
        raise EmptyDataset("training set is empty")
    return GraphBatch.from_graphs(list(dataset))


def train(dataset: Sequence[BrainGraph] | GraphBatch, cfg: TrainConfig, n_classes: int | None = None):
    """Train from a fresh seeded initialization; returns ``(params, history)``.

    ``history`` records the training-mode loss and accuracy of each epoch's
    forward pass, taken before that epoch's update.
    """
    batch = _as_batch(dataset)
    if batch.n_subjects == 0:
        raise EmptyDataset("training set is empty")
    labels = batch.labels
    if np.unique(labels).size < 2:
        raise SingleClass(f"training set has a single class ({labels[0]})")
    n_classes = int(labels.max()) + 1 if n_classes is None else n_classes

    model = get_model(cfg.model)
    params = model.init(batch.n_regions, n_classes, cfg.hidden_dim, derive_rng(cfg.seed, "init", cfg.model))
    drop_rng = derive_rng(cfg.seed, "dropout", cfg.model)
    opt = AdamW(cfg.learning_rate, cfg.weight_decay)
    named = params.named()
    history = TrainHistory()
    for epoch in range(cfg.epochs):
        logits, cache = model.forward(params, batch, True, cfg.dropout, drop_rng)
        value, dlogits = cross_entropy(logits, labels)
        grads = model.backward(params, cache, dlogits)
        opt.step(named, grads.named())
        history.loss.append(value)
        history.accuracy.append(float(np.mean(logits.argmax(axis=1) == labels)))
        if epoch % 50 == 0 or epoch == cfg.epochs - 1:
            logger.debug("%s epoch %d: loss %.6f acc %.3f", cfg.model, epoch + 1, value, history.accuracy[-1])
    return params, history
