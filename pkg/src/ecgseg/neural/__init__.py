"""From-scratch ConvBiLSTM segmenter: layers, model, training, checkpoints."""

from .model import LAYER_PARAMS, TOTAL_PARAMS, WINDOW, ModelParams, ModelSpec, loss_and_grad, model_forward, predict
from .train import TrainConfig, train

__all__ = [
    "LAYER_PARAMS",
    "TOTAL_PARAMS",
    "WINDOW",
    "ModelParams",
    "ModelSpec",
    "TrainConfig",
    "loss_and_grad",
    "model_forward",
    "predict",
    "train",
]
