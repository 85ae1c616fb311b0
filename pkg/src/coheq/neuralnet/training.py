"""Optimizer, transfer strategies and the training loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dataset import WindowedDataset, shuffle_epoch, window_frame
from ..metrics import MetricTrace, compute_ber, hard_decide, q_from_ber
from ..rxdsp import SymbolFrame
from .model import (EqualizerModel, backward, forward, layer_of_param,
                    mse_and_grad)

__all__ = [
    "TrainConfig",
    "AdamState",
    "adam_step",
    "TL_STRATEGIES",
    "apply_tl_strategy",
    "predict",
    "evaluate_model",
    "train",
]

TL_STRATEGIES = ("retrain_all", "freeze_conv", "freeze_recurrent")


@dataclass
class TrainConfig:
    batch_size: int = 256
    max_epochs: int = 60
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle_seed: int = 0
    eval_batch: int = 4096

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size >= 1 and max_epochs >= 0 required")


@dataclass
class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def for_model(cls, model: EqualizerModel) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in model.params.items()},
                   v={k: np.zeros_like(p) for k, p in model.params.items()})


def adam_step(model: EqualizerModel, grads: dict, state: AdamState,
              cfg: TrainConfig) -> None:
    """One bias-corrected Adam update, in place.

    Frozen layers are untouched entirely: no parameter change and no
    moment accumulation, so unfreezing later resumes from pristine state.
    """
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        if layer_of_param(name) in model.frozen:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (cfg.learning_rate * (m / bc1)
                  / (np.sqrt(v / bc2) + cfg.eps))
        model.params[name] -= update


def apply_tl_strategy(model: EqualizerModel, strategy: str) -> EqualizerModel:
    """Set the freeze mask for a transfer strategy, in place.

    retrain_all      nothing frozen (also the from-scratch setting)
    freeze_conv      conv frozen; biLSTM and dense retrain
    freeze_recurrent biLSTM and dense frozen; only conv retrains
    """
    if strategy not in TL_STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; "
                         f"choose from {TL_STRATEGIES}")
    model.frozen = {"retrain_all": set(),
                    "freeze_conv": {"conv"},
                    "freeze_recurrent": {"bilstm", "dense"}}[strategy]
    return model


def predict(model: EqualizerModel, inputs: np.ndarray,
            batch: int = 4096) -> np.ndarray:
    """Forward pass in chunks; returns (n, 2) predictions."""
    outs = []
    for lo in range(0, inputs.shape[0], batch):
        out, _ = forward(model, inputs[lo:lo + batch])
        outs.append(out)
    return np.concatenate(outs, axis=0)


def _prepare_eval(frame: SymbolFrame, fmt, n_taps: int, pol: str):
    """Window a test frame once and pre-decide its transmit indices."""
    ds = window_frame(frame, n_taps, pol=pol)
    tx_c = ds.targets[:, 0] + 1j * ds.targets[:, 1]
    return ds, hard_decide(tx_c, fmt)


def _eval_prepared(model: EqualizerModel, ds: WindowedDataset,
                   tx_idx: np.ndarray, fmt,
                   eval_batch: int) -> tuple[float, float, float]:
    pred = predict(model, ds.inputs, batch=eval_batch)
    mse = float(np.mean((pred - ds.targets) ** 2))
    rx_idx = hard_decide(pred[:, 0] + 1j * pred[:, 1], fmt)
    ber, _, _ = compute_ber(tx_idx, rx_idx, fmt)
    return ber, q_from_ber(ber), mse


def evaluate_model(model: EqualizerModel, frame: SymbolFrame, fmt,
                   n_taps: int, pol: str = "x",
                   eval_batch: int = 4096) -> tuple[float, float, float]:
    """(ber, q_db, mse) of the model's hard decisions on a test frame."""
    ds, tx_idx = _prepare_eval(frame, fmt, n_taps, pol)
    return _eval_prepared(model, ds, tx_idx, fmt, eval_batch)


def train(model: EqualizerModel, train_ds: WindowedDataset,
          test_frame: SymbolFrame, fmt, cfg: TrainConfig,
          adam: AdamState | None = None, scenario_id: str = "",
          strategy: str = "retrain_all",
          fraction: float = 1.0) -> MetricTrace:
    """Minibatch-train the model in place and record per-epoch metrics.

    Epoch 0 in the returned trace is the pre-training evaluation; epochs
    shuffle deterministically from (shuffle_seed, epoch index).  With
    max_epochs=0 only the pre-training row is produced.  A non-finite
    batch loss aborts with RuntimeError.
    """
    if adam is None:
        adam = AdamState.for_model(model)
    n_taps = (model.cfg.window_len - 1) // 2
    trace = MetricTrace(scenario_id=scenario_id, strategy=strategy,
                        fraction=fraction)

    eval_ds, eval_tx = _prepare_eval(test_frame, fmt, n_taps, train_ds.pol)

    pred0 = predict(model, train_ds.inputs, batch=cfg.eval_batch)
    mse0 = float(np.mean((pred0 - train_ds.targets) ** 2))
    ber0, q0, _ = _eval_prepared(model, eval_ds, eval_tx, fmt,
                                 cfg.eval_batch)
    trace.append(0, mse0, ber0, q0)

    for epoch in range(1, cfg.max_epochs + 1):
        ds = shuffle_epoch(train_ds, epoch - 1, cfg.shuffle_seed)
        loss_sum = 0.0
        for lo in range(0, ds.n_examples, cfg.batch_size):
            xb = ds.inputs[lo:lo + cfg.batch_size]
            tb = ds.targets[lo:lo + cfg.batch_size]
            out, cache = forward(model, xb, want_cache=True)
            loss, dout = mse_and_grad(out, tb)
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite training loss at epoch "
                                   f"{epoch}, example offset {lo}")
            grads = backward(model, cache, dout)
            adam_step(model, grads, adam, cfg)
            loss_sum += loss * xb.shape[0]
        ber, q, _ = _eval_prepared(model, eval_ds, eval_tx, fmt,
                                   cfg.eval_batch)
        trace.append(epoch, loss_sum / ds.n_examples, ber, q)
    return trace
