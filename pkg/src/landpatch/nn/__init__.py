"""Small trainable CNN with explicit forward/backward passes.

Public surface: layer/model specs and the architecture registry
(:mod:`model`), forward/backward/init (:mod:`ops`), the training loop with
run control (:mod:`train`), and checkpoint serialization
(:mod:`checkpoint`).
"""
from .model import (
    LayerSpec,
    ModelSpec,
    activation,
    architectures,
    build_architecture,
    conv2d,
    default_convnet,
    dense,
    dropout,
    flatten,
    maxpool,
    register_architecture,
)
from .ops import backward, cross_entropy, forward, init_weights, softmax
from .train import EpochStats, RunControl, TrainConfig, train
from .checkpoint import Checkpoint, load_checkpoint, predict_batch, predict_proba, save_checkpoint

__all__ = [
    "LayerSpec",
    "ModelSpec",
    "activation",
    "architectures",
    "backward",
    "build_architecture",
    "Checkpoint",
    "conv2d",
    "cross_entropy",
    "default_convnet",
    "dense",
    "dropout",
    "EpochStats",
    "flatten",
    "forward",
    "init_weights",
    "load_checkpoint",
    "maxpool",
    "ModelSpec",
    "predict_batch",
    "predict_proba",
    "register_architecture",
    "RunControl",
    "save_checkpoint",
    "softmax",
    "train",
    "TrainConfig",
]
