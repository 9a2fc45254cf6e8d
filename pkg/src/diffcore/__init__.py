from src.diffcore.tensor import Tensor, Graph, broadcast_shape
from src.diffcore.ops import (
    op_catalog,
    relu,
    gelu,
    softmax,
    layer_norm,
    dropout,
    concat,
    embedding,
    conv2d,
    avg_pool2d,
    max_pool2d,
    global_avg_pool,
    linear,
    l1_distance,
)
from src.diffcore.optim import AdamState, Adam, adam_step
from src.diffcore.gradcheck import check_gradients
from src.diffcore.checkpoint import Checkpoint, save_checkpoint, load_checkpoint

__all__ = [
    "Tensor", "Graph", "broadcast_shape",
    "op_catalog", "relu", "gelu", "softmax", "layer_norm", "dropout", "concat",
    "embedding", "conv2d", "avg_pool2d", "max_pool2d", "global_avg_pool",
    "linear", "l1_distance",
    "AdamState", "Adam", "adam_step",
    "check_gradients",
    "Checkpoint", "save_checkpoint", "load_checkpoint",
]
