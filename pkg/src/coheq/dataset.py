"""Windowed training datasets built from symbol frames.

A window of M = 2N + 1 received symbols around position t maps to the
transmitted center symbol of one polarization.  Features are the four
real channels (Re rx_x, Im rx_x, Re rx_y, Im rx_y); targets are (Re, Im)
of the chosen polarization's tx symbol.  A frame of n symbols yields
n - 2N windows (positions with full context only).
"""

from __future__ import annotations

import csv
import math
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .rxdsp import SymbolFrame

__all__ = [
    "WindowedDataset",
    "window_frame",
    "shuffle_epoch",
    "subset_fraction",
    "independence_check",
    "independence_threshold",
    "dump_windows",
    "load_windows",
]


@dataclass
class WindowedDataset:
    """inputs (n, M, 4) float64, targets (n, 2) float64."""

    inputs: np.ndarray
    targets: np.ndarray
    n_taps: int
    pol: str = "x"
    label: str = ""

    def __post_init__(self) -> None:
        if self.inputs.ndim != 3 or self.inputs.shape[2] != 4:
            raise ValueError("inputs must be (n, M, 4)")
        if self.inputs.shape[1] != 2 * self.n_taps + 1:
            raise ValueError("window length must equal 2 * n_taps + 1")
        if self.targets.shape != (self.inputs.shape[0], 2):
            raise ValueError("targets must be (n, 2)")

    @property
    def n_examples(self) -> int:
        return self.inputs.shape[0]

    @property
    def window_len(self) -> int:
        return self.inputs.shape[1]


def window_frame(frame: SymbolFrame, n_taps: int,
                 pol: str = "x") -> WindowedDataset:
    """Slide a length 2*n_taps+1 window over the frame's rx streams.

    Window k covers symbols k .. k+2N and predicts tx symbol k+N, so
    inputs[k, n_taps, 0:2] reproduces rx_x[k + n_taps] exactly.
    """
    if pol not in ("x", "y"):
        raise ValueError("pol must be 'x' or 'y'")
    m = 2 * n_taps + 1
    n = frame.n_symbols
    if n < m:
        raise ValueError(f"frame of {n} symbols shorter than window {m}")
    feats = np.stack([frame.rx_x.real, frame.rx_x.imag,
                      frame.rx_y.real, frame.rx_y.imag], axis=1)
    win = np.lib.stride_tricks.sliding_window_view(feats, m, axis=0)
    inputs = np.ascontiguousarray(win.transpose(0, 2, 1), dtype=np.float64)
    tx = frame.tx_x if pol == "x" else frame.tx_y
    center = tx[n_taps:n - n_taps]
    targets = np.stack([center.real, center.imag], axis=1)
    return WindowedDataset(inputs=inputs, targets=targets, n_taps=n_taps,
                           pol=pol, label=frame.label)


def shuffle_epoch(ds: WindowedDataset, epoch_index: int,
                  seed: int) -> WindowedDataset:
    """Deterministic per-epoch permutation of the examples.

    The permutation is a pure function of (seed, epoch_index): the same
    pair always yields the same order, different epochs differ.
    """
    rng = np.random.default_rng((seed, epoch_index))
    perm = rng.permutation(ds.n_examples)
    return WindowedDataset(inputs=ds.inputs[perm], targets=ds.targets[perm],
                           n_taps=ds.n_taps, pol=ds.pol, label=ds.label)


def subset_fraction(ds: WindowedDataset, fraction: float,
                    seed: int) -> WindowedDataset:
    """Draw ceil(fraction * n) examples once, without replacement.

    The draw is fixed by seed and never resampled across epochs; training
    on a fraction always sees the same reduced set.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    count = math.ceil(fraction * ds.n_examples)
    rng = np.random.default_rng((seed, 0x5B5))
    idx = rng.choice(ds.n_examples, size=count, replace=False)
    return WindowedDataset(inputs=ds.inputs[idx], targets=ds.targets[idx],
                           n_taps=ds.n_taps, pol=ds.pol, label=ds.label)


def independence_check(a: np.ndarray, b: np.ndarray,
                       max_lag: int | None = None) -> float:
    """Max magnitude of the normalized circular cross-correlation.

    Streams are centered and scaled to unit variance, correlated via FFT,
    and the maximum |rho| over the requested lags returned (all n circular
    lags by default, or |lag| <= max_lag).  For independent streams the
    per-lag tail is P(|rho| > x) <= 2 exp(-n x^2 / 2), real or complex;
    compare against independence_threshold for the matching max-statistic
    quantile.
    """
    if a.size != b.size:
        raise ValueError("streams differ in length")
    n = a.size
    az = (a - a.mean()) / a.std()
    bz = (b - b.mean()) / b.std()
    r = sfft.ifft(sfft.fft(az) * np.conj(sfft.fft(bz))) / n
    mag = np.abs(r)
    if max_lag is not None:
        if not 0 <= max_lag < n:
            raise ValueError("max_lag out of range")
        mag = np.r_[mag[:max_lag + 1], mag[n - max_lag:]]
    return float(mag.max())


def independence_threshold(n: int, n_lags: int | None = None,
                           alpha: float = 0.01) -> float:
    """Null quantile for the max of |rho| over n_lags lags.

    A real-valued stream's per-lag correlation is half-normal with scale
    1/sqrt(n), tail P(|rho| > x) <= 2 exp(-n x^2 / 2); a complex stream's
    Rayleigh tail exp(-n x^2) is smaller still.  A union bound over m lags
    then gives x = sqrt(2 ln(2 m / alpha) / n).  The single-lag 99% value
    2.58/sqrt(n) is exceeded by the max over all lags of independent
    streams with near certainty; this is the statistically meaningful
    replacement.
    """
    m = n if n_lags is None else n_lags
    return float(np.sqrt(2.0 * np.log(2.0 * m / alpha) / n))


_WNDS_MAGIC = b"WNDS"
_WNDS_HEADER = struct.Struct("<4sIQIII4x")  # magic, ver, n, M, feat, targ


def dump_windows(ds: WindowedDataset, path: str) -> None:
    """Binary tensor dump plus a CSV manifest describing the layout."""
    payload = (ds.inputs.astype("<f8").tobytes()
               + ds.targets.astype("<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(_WNDS_HEADER.pack(_WNDS_MAGIC, 1, ds.n_examples,
                                   ds.window_len, 4, 2))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))
    with open(path + ".manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        for k, v in [("file", path), ("format", "WNDS v1"),
                     ("n_examples", ds.n_examples),
                     ("window_len", ds.window_len),
                     ("n_features", 4), ("n_targets", 2),
                     ("n_taps", ds.n_taps), ("pol", ds.pol),
                     ("dtype", "float64 little-endian"),
                     ("layout", "inputs[n,M,4] then targets[n,2], row-major"),
                     ("feature_order",
                      "re_rx_x im_rx_x re_rx_y im_rx_y")]:
            w.writerow([k, v])


def load_windows(path: str) -> WindowedDataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _WNDS_HEADER.size + 4:
        raise ValueError("truncated window dump")
    magic, ver, n, m, nf, nt = _WNDS_HEADER.unpack_from(raw)
    if magic != _WNDS_MAGIC:
        raise ValueError("bad magic; not a window dump")
    if ver != 1:
        raise ValueError(f"unsupported window dump version {ver}")
    need = _WNDS_HEADER.size + (n * m * nf + n * nt) * 8 + 4
    if len(raw) != need:
        raise ValueError("unexpected end of window dump")
    payload = raw[_WNDS_HEADER.size:-4]
    (crc,) = struct.unpack("<I", raw[-4:])
    if crc != zlib.crc32(payload):
        raise ValueError("window dump checksum mismatch")
    flat = np.frombuffer(payload, dtype="<f8")
    cut = n * m * nf
    return WindowedDataset(inputs=flat[:cut].reshape(n, m, nf).copy(),
                           targets=flat[cut:].reshape(n, nt).copy(),
                           n_taps=(m - 1) // 2)
