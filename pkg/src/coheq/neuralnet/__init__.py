"""Hand-rolled numpy equalizer: model, training, checkpoints."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .model import (EqualizerConfig, EqualizerModel, LAYERS, PARAM_ORDER,
                    backward, forward, init_model, layer_of_param,
                    mse_and_grad, param_counts, zero_model)
from .training import (AdamState, TL_STRATEGIES, TrainConfig, adam_step,
                       apply_tl_strategy, evaluate_model, predict, train)

__all__ = [
    "CheckpointError", "load_checkpoint", "save_checkpoint",
    "EqualizerConfig", "EqualizerModel", "LAYERS", "PARAM_ORDER",
    "backward", "forward", "init_model", "layer_of_param", "mse_and_grad",
    "param_counts", "zero_model",
    "AdamState", "TL_STRATEGIES", "TrainConfig", "adam_step",
    "apply_tl_strategy", "evaluate_model", "predict", "train",
]
