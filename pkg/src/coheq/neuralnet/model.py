"""Window-regression equalizer: conv1d -> biLSTM -> dense, in numpy.

The network maps a window of received symbols, shape (batch, M, 4) with
M = 2N + 1 and features (Re rx_x, Im rx_x, Re rx_y, Im rx_y), to the (Re,
Im) of the window's center transmitted symbol in one polarization.  All
math is float64 and hand-rolled so gradients are exact and every update
is reproducible; no framework is involved.

Layers
------
conv1d    same-padded along the window axis, F filters of width k over the
          4 input channels, LeakyReLU(0.2).
bilstm    one forward and one backward LSTM over the window, H units each,
          gate order (i, f, g, o), outputs concatenated to (B, M, 2H).
dense     flattened (B, M*2H) -> (B, 2) affine head, no output activation.

Parameter counts follow the closed forms

    conv:   F (4 k + 1)
    bilstm: 2 * 4 * (H (F + H) + H)
    dense:  (M * 2H) * 2 + 2
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EqualizerConfig",
    "EqualizerModel",
    "LAYERS",
    "PARAM_ORDER",
    "layer_of_param",
    "param_counts",
    "init_model",
    "zero_model",
    "forward",
    "backward",
    "mse_and_grad",
]

LAYERS = ("conv", "bilstm", "dense")

# Fixed serialization and iteration order of parameter blocks.
PARAM_ORDER = ("conv_w", "conv_b", "fw_wx", "fw_wh", "fw_b",
               "bw_wx", "bw_wh", "bw_b", "dense_w", "dense_b")

_PARAM_LAYER = {"conv_w": "conv", "conv_b": "conv",
                "fw_wx": "bilstm", "fw_wh": "bilstm", "fw_b": "bilstm",
                "bw_wx": "bilstm", "bw_wh": "bilstm", "bw_b": "bilstm",
                "dense_w": "dense", "dense_b": "dense"}


def layer_of_param(name: str) -> str:
    return _PARAM_LAYER[name]


@dataclass
class EqualizerConfig:
    """Architecture hyperparameters.  half_window is the N taps kept on
    each side of the center symbol, so windows have M = 2N + 1 symbols."""

    n_filters: int = 32
    kernel_size: int = 10
    lstm_hidden: int = 40
    half_window: int = 10
    leaky_slope: float = 0.2

    def __post_init__(self) -> None:
        for name in ("n_filters", "kernel_size", "lstm_hidden",
                     "half_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def window_len(self) -> int:
        return 2 * self.half_window + 1

    def param_shapes(self) -> dict[str, tuple]:
        f, k, h, m = (self.n_filters, self.kernel_size, self.lstm_hidden,
                      self.window_len)
        return {
            "conv_w": (f, k, 4), "conv_b": (f,),
            "fw_wx": (4 * h, f), "fw_wh": (4 * h, h), "fw_b": (4 * h,),
            "bw_wx": (4 * h, f), "bw_wh": (4 * h, h), "bw_b": (4 * h,),
            "dense_w": (m * 2 * h, 2), "dense_b": (2,),
        }


def param_counts(cfg: EqualizerConfig) -> dict[str, int]:
    """Per-layer and total parameter counts (closed forms above)."""
    f, k, h, m = (cfg.n_filters, cfg.kernel_size, cfg.lstm_hidden,
                  cfg.window_len)
    conv = f * (4 * k + 1)
    bilstm = 2 * 4 * (h * (f + h) + h)
    dense = (m * 2 * h) * 2 + 2
    return {"conv": conv, "bilstm": bilstm, "dense": dense,
            "total": conv + bilstm + dense}


@dataclass
class EqualizerModel:
    cfg: EqualizerConfig
    params: dict = field(default_factory=dict)
    frozen: set = field(default_factory=set)

    def trainable(self, name: str) -> bool:
        return layer_of_param(name) not in self.frozen

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "EqualizerModel":
        return EqualizerModel(cfg=self.cfg,
                              params={k: v.copy()
                                      for k, v in self.params.items()},
                              frozen=set(self.frozen))


def _glorot(rng: np.random.Generator, shape: tuple, fan_in: int,
            fan_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def init_model(cfg: EqualizerConfig, seed: int) -> EqualizerModel:
    """Glorot-uniform weights, zero biases, forget-gate bias 1.

    Weight tensors are drawn in the fixed order conv_w, fw_wx, fw_wh,
    bw_wx, bw_wh, dense_w from one PCG64 stream, so a seed pins the model.
    """
    rng = np.random.default_rng(seed)
    f, k, h = cfg.n_filters, cfg.kernel_size, cfg.lstm_hidden
    m = cfg.window_len
    p = {}
    p["conv_w"] = _glorot(rng, (f, k, 4), 4 * k, f * k)
    p["fw_wx"] = _glorot(rng, (4 * h, f), f, 4 * h)
    p["fw_wh"] = _glorot(rng, (4 * h, h), h, 4 * h)
    p["bw_wx"] = _glorot(rng, (4 * h, f), f, 4 * h)
    p["bw_wh"] = _glorot(rng, (4 * h, h), h, 4 * h)
    p["dense_w"] = _glorot(rng, (m * 2 * h, 2), m * 2 * h, 2)
    p["conv_b"] = np.zeros(f)
    p["dense_b"] = np.zeros(2)
    for d in ("fw", "bw"):
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0  # forget gate starts open
        p[f"{d}_b"] = b
    return EqualizerModel(cfg=cfg, params={k_: p[k_] for k_ in PARAM_ORDER})


def zero_model(cfg: EqualizerConfig) -> EqualizerModel:
    """All parameters exactly zero (reference point: zero in -> zero out)."""
    return EqualizerModel(cfg=cfg,
                          params={k: np.zeros(s) for k, s in
                                  cfg.param_shapes().items()})


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # exp overflow for very negative z saturates cleanly to 0
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def _conv_cols(x: np.ndarray, k: int) -> np.ndarray:
    """im2col for same-padded conv along axis 1: (B, M, 4) -> (B*M, k*4).

    Even k pads (k-1)//2 left and the remainder right, matching the usual
    'same' convention.
    """
    b, m, c = x.shape
    pl = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (pl, k - 1 - pl), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)
    # win: (B, M, 4, k) -> (B, M, k, 4) so columns vary channel-fastest
    return np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(b * m,
                                                                   k * c)


def _bilstm_forward(x: np.ndarray, p: dict, want_cache: bool = True):
    """Both LSTM directions over (B, M, F), stepped together.

    Direction 0 walks the window left to right, direction 1 right to
    left; each step does one stacked (2, B, H) x (2, H, 4H) matmul so the
    python-level loop runs M times total.  Returns the forward-direction
    and backward-direction hidden sequences, both laid out as (B, M, H)
    in window order, plus the backprop cache (None when not wanted, which
    also skips writing the per-step activation stacks).
    """
    bsz, m, _ = x.shape
    h = p["fw_wh"].shape[1]
    x_flat = x.reshape(bsz * m, -1)
    xw_f = (x_flat @ p["fw_wx"].T).reshape(bsz, m, 4 * h)
    xw_b = (x_flat @ p["bw_wx"].T).reshape(bsz, m, 4 * h)
    # xs[t, 0] feeds the forward cell at step t, xs[t, 1] the backward
    # cell, which consumes the window reversed.
    xs = np.stack([xw_f.transpose(1, 0, 2),
                   xw_b[:, ::-1].transpose(1, 0, 2)], axis=1)
    wh_t = np.stack([p["fw_wh"].T, p["bw_wh"].T])          # (2, H, 4H)
    bias = np.stack([p["fw_b"], p["bw_b"]])[:, None, :]    # (2, 1, 4H)

    hs = np.empty((m, 2, bsz, h))
    if want_cache:
        gates = np.empty((m, 2, bsz, 4 * h))
        c_prevs = np.empty((m, 2, bsz, h))
        cts = np.empty((m, 2, bsz, h))
        hprevs = np.empty((m, 2, bsz, h))

    h_t = np.zeros((2, bsz, h))
    c_t = np.zeros((2, bsz, h))
    for t in range(m):
        z = xs[t] + h_t @ wh_t + bias
        i_f = _sigmoid(z[..., :2 * h])     # i and f share one call
        g = np.tanh(z[..., 2 * h:3 * h])
        o = _sigmoid(z[..., 3 * h:])
        if want_cache:
            hprevs[t] = h_t
            gt = gates[t]
            gt[..., :2 * h] = i_f
            gt[..., 2 * h:3 * h] = g
            gt[..., 3 * h:] = o
            c_prevs[t] = c_t
        c_t = i_f[..., h:] * c_t + i_f[..., :h] * g
        ct = np.tanh(c_t)
        if want_cache:
            cts[t] = ct
        h_t = o * ct
        hs[t] = h_t
    hf = np.ascontiguousarray(hs[:, 0].transpose(1, 0, 2))
    hb = np.ascontiguousarray(hs[::-1, 1].transpose(1, 0, 2))
    if not want_cache:
        return hf, hb, None
    cache = {"gates": gates, "c_prev": c_prevs, "ct": cts,
             "hprev": hprevs}
    return hf, hb, cache


def _bilstm_backward(dhf: np.ndarray, dhb: np.ndarray, x: np.ndarray,
                     cache: dict, p: dict):
    """Backprop through time for both directions at once.

    dhf/dhb: (B, M, H) gradients on the window-ordered hidden outputs.
    Returns (dx, grads dict for the six recurrent parameter blocks).
    """
    bsz, m, _ = x.shape
    h = p["fw_wh"].shape[1]
    # step-major gradient stacks matching the forward walk order
    dh_seq = np.stack([dhf.transpose(1, 0, 2),
                       dhb[:, ::-1].transpose(1, 0, 2)], axis=1)
    wh2 = np.stack([p["fw_wh"], p["bw_wh"]])               # (2, 4H, H)
    gates, c_prevs = cache["gates"], cache["c_prev"]
    cts = cache["ct"]

    dz_all = np.empty((m, 2, bsz, 4 * h))
    dh_next = np.zeros((2, bsz, h))
    dc_next = np.zeros((2, bsz, h))
    for t in range(m - 1, -1, -1):
        gt = gates[t]
        i, f = gt[..., :h], gt[..., h:2 * h]
        g, o = gt[..., 2 * h:3 * h], gt[..., 3 * h:]
        ct = cts[t]
        dh = dh_seq[t] + dh_next
        do = dh * ct
        dc = dh * o * (1.0 - ct * ct) + dc_next
        dz = dz_all[t]
        dz[..., :h] = (dc * g) * i * (1.0 - i)
        dz[..., h:2 * h] = (dc * c_prevs[t]) * f * (1.0 - f)
        dz[..., 2 * h:3 * h] = (dc * i) * (1.0 - g * g)
        dz[..., 3 * h:] = do * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz @ wh2
    x_flat = x.reshape(bsz * m, -1)
    xrev_flat = np.ascontiguousarray(x[:, ::-1]).reshape(bsz * m, -1)
    grads = {}
    dx = None
    for d, (pre, xf) in enumerate((("fw", x_flat), ("bw", xrev_flat))):
        dz_flat = np.ascontiguousarray(
            dz_all[:, d].transpose(1, 0, 2)).reshape(bsz * m, 4 * h)
        hprev_flat = np.ascontiguousarray(
            cache["hprev"][:, d].transpose(1, 0, 2)).reshape(bsz * m, h)
        grads[f"{pre}_wx"] = dz_flat.T @ xf
        grads[f"{pre}_wh"] = dz_flat.T @ hprev_flat
        grads[f"{pre}_b"] = dz_flat.sum(axis=0)
        dxd = (dz_flat @ p[f"{pre}_wx"]).reshape(bsz, m, -1)
        dx = dxd if d == 0 else dx + dxd[:, ::-1]
    return dx, grads


def forward(model: EqualizerModel, x: np.ndarray, want_cache: bool = False):
    """Run the network on a batch of windows.

    Parameters
    ----------
    x : np.ndarray
        (B, M, 4) float64 feature windows.
    want_cache : bool
        Keep intermediate activations for backward().

    Returns
    -------
    (out, cache)
        out is (B, 2); cache is None unless requested.
    """
    cfg = model.cfg
    p = model.params
    b, m, c = x.shape
    if m != cfg.window_len or c != 4:
        raise ValueError(f"expected (B, {cfg.window_len}, 4) input, "
                         f"got {x.shape}")
    k = cfg.kernel_size
    cols = _conv_cols(x, k)
    zc = cols @ p["conv_w"].reshape(cfg.n_filters, -1).T + p["conv_b"]
    neg = zc < 0
    ac = np.where(neg, cfg.leaky_slope * zc, zc).reshape(b, m,
                                                         cfg.n_filters)
    hf, hb, cache_l = _bilstm_forward(ac, p, want_cache=want_cache)
    hcat = np.concatenate([hf, hb], axis=2)          # (B, M, 2H)
    flat = hcat.reshape(b, -1)
    out = flat @ p["dense_w"] + p["dense_b"]
    if not want_cache:
        return out, None
    cache = {"x": x, "cols": cols, "neg": neg, "ac": ac,
             "lstm": cache_l, "flat": flat}
    return out, cache


def backward(model: EqualizerModel, cache: dict, dout: np.ndarray) -> dict:
    """Gradients of the cached forward pass w.r.t. unfrozen parameters.

    Frozen layers contribute no entries; gradient flow through them to
    lower layers is unaffected.
    """
    cfg = model.cfg
    p = model.params
    b = dout.shape[0]
    h = cfg.lstm_hidden
    grads = {}

    dflat = dout @ p["dense_w"].T
    if "dense" not in model.frozen:
        grads["dense_w"] = cache["flat"].T @ dout
        grads["dense_b"] = dout.sum(axis=0)
    dhcat = dflat.reshape(b, cfg.window_len, 2 * h)
    dhf = dhcat[:, :, :h]
    dhb = dhcat[:, :, h:]

    ac = cache["ac"]
    dac, lstm_grads = _bilstm_backward(np.ascontiguousarray(dhf),
                                       np.ascontiguousarray(dhb),
                                       ac, cache["lstm"], p)
    if "bilstm" not in model.frozen:
        grads.update(lstm_grads)

    if "conv" not in model.frozen:
        dzc = dac.reshape(b * cfg.window_len, cfg.n_filters)
        dzc = np.where(cache["neg"], cfg.leaky_slope * dzc, dzc)
        grads["conv_w"] = (dzc.T @ cache["cols"]).reshape(
            cfg.n_filters, cfg.kernel_size, 4)
        grads["conv_b"] = dzc.sum(axis=0)
    return grads


def mse_and_grad(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over batch and both outputs, with its gradient."""
    err = pred - target
    loss = float(np.mean(err ** 2))
    return loss, 2.0 * err / err.size
