from .layers import LayerWeights, co_embed_node_layer, edge_layer, gcn_layer, identity, relu
from .network import (
    CoEmbedNet,
    GcnNet,
    GcnParams,
    GraphBatch,
    ModelParams,
    batch_gradients,
    cross_entropy,
    forward,
    get_model,
    gradients,
    loss,
    predict,
)
from .optim import AdamW
from .train import TrainConfig, TrainHistory, train

__all__ = [
    "AdamW",
    "CoEmbedNet",
    "GcnNet",
    "GcnParams",
    "GraphBatch",
    "LayerWeights",
    "ModelParams",
    "TrainConfig",
    "TrainHistory",
    "batch_gradients",
    "co_embed_node_layer",
    "cross_entropy",
    "edge_layer",
    "forward",
    "gcn_layer",
    "get_model",
    "gradients",
    "identity",
    "loss",
    "predict",
    "relu",
    "train",
]
