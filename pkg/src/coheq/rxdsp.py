"""Receiver DSP: dispersion compensation, matched filtering, alignment,
normalization, and the transceiver noise model.

The linear receiver turns a propagated waveform back into symbol-rate
tx/rx stream pairs ready for windowing:

    transceiver noise (tx side) -> link -> transceiver noise (rx side)
    -> frequency-domain dispersion compensation -> matched RRC filter
    -> downsample at the best phase -> integer-lag alignment
    -> guard trim -> per-polarization least-squares normalization

Transceiver noise follows the aggregate back-to-back model

    SNR[dB] = -0.175 * R[GBd] + 30,

split evenly (in variance) between a transmitter-side and a receiver-side
injection.  Noise is injected in the waveform domain; the per-sample
variance is sized so that the post-matched-filter symbol-domain SNR of the
two injections combined meets the model, accounting for the RRC noise
bandwidth factor (1 - rolloff/4).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .fiberlink import FiberSpec, LinkSpec, beta2_s2_per_m, propagate_link
from .txsig import (TxSpec, TxSymbols, Waveform, _rrc_spectrum,
                    generate_symbols, shape_waveform)

__all__ = [
    "DspError",
    "SymbolFrame",
    "transceiver_snr_db",
    "apply_transceiver_noise",
    "compensate_dispersion",
    "matched_filter_downsample",
    "align_streams",
    "normalize_to_reference",
    "guard_symbols",
    "build_symbol_frame",
    "export_frame_csv",
]


class DspError(RuntimeError):
    """Receiver DSP failure (alignment, sizing) that should abort a run."""


@dataclass
class SymbolFrame:
    """Aligned tx/rx symbol streams at one sample per symbol.

    rx streams are least-squares normalized against their tx partners;
    tx streams are pristine constellation points.
    """

    tx_x: np.ndarray
    tx_y: np.ndarray
    rx_x: np.ndarray
    rx_y: np.ndarray
    symbol_rate_gbd: float
    label: str = ""

    def __post_init__(self) -> None:
        n = self.tx_x.size
        if not (self.tx_y.size == self.rx_x.size == self.rx_y.size == n):
            raise ValueError("stream lengths differ")

    @property
    def n_symbols(self) -> int:
        return self.tx_x.size


def transceiver_snr_db(symbol_rate_gbd: float) -> float:
    """Aggregate transceiver SNR model: -0.175 * R + 30 (R in GBd)."""
    return -0.175 * symbol_rate_gbd + 30.0


def apply_transceiver_noise(wave: Waveform, symbol_rate_gbd: float,
                            enabled: bool, seed: int,
                            ref_power_w: tuple[float, float] | None = None
                            ) -> Waveform:
    """Add one call site's share of the transceiver noise budget.

    Each of the two call sites (tx side, rx side) contributes half of the
    total noise variance implied by transceiver_snr_db.  The matched filter
    folds white waveform noise of per-sample variance sigma^2 into symbol
    noise of sps * sigma^2, and the symbol-domain signal power is sps^2
    times the waveform power, so per polarization

        sigma^2 = P_pol * sps / (2 * snr_lin)

    lands the combined back-to-back symbol SNR exactly on the model.

    ref_power_w optionally fixes the per-polarization signal power the
    noise is sized against; the caller should pass the clean shaped-signal
    power so the second call site does not budget against noise injected
    by the first.  Default: measured from the waveform.  Disabled ->
    identity.
    """
    if not enabled:
        return wave
    sps = wave.sample_rate_hz / (symbol_rate_gbd * 1e9)
    if abs(sps - round(sps)) > 1e-9:
        raise DspError("sample rate is not an integer multiple of the "
                       "symbol rate")
    sps = round(sps)
    snr_lin = 10.0 ** (transceiver_snr_db(symbol_rate_gbd) / 10.0)
    rng = np.random.default_rng(seed)
    n = wave.n_samples

    def _noisy(pol: np.ndarray, p_ref: float | None) -> np.ndarray:
        p = np.mean(np.abs(pol) ** 2) if p_ref is None else p_ref
        var = p * sps / (2.0 * snr_lin)
        sig = np.sqrt(var / 2.0)
        return pol + sig * (rng.standard_normal(n)
                            + 1j * rng.standard_normal(n))

    px, py = ref_power_w if ref_power_w is not None else (None, None)
    return Waveform(x=_noisy(wave.x, px), y=_noisy(wave.y, py),
                    sample_rate_hz=wave.sample_rate_hz)


def compensate_dispersion(wave: Waveform, fiber: FiberSpec,
                          total_length_km: float) -> Waveform:
    """Exact inverse of the link's accumulated quadratic spectral phase.

    All-pass: multiplies the spectrum by exp(-i (beta2/2) omega^2 L), the
    conjugate of the propagation phase, leaving magnitude untouched.
    total_length_km = 0 is the identity.
    """
    omega = 2.0 * np.pi * sfft.fftfreq(wave.n_samples,
                                       d=1.0 / wave.sample_rate_hz)
    phase = np.exp(-0.5j * beta2_s2_per_m(fiber) * total_length_km * 1e3
                   * omega ** 2)
    return Waveform(x=sfft.ifft(sfft.fft(wave.x) * phase),
                    y=sfft.ifft(sfft.fft(wave.y) * phase),
                    sample_rate_hz=wave.sample_rate_hz)


def matched_filter_downsample(wave: Waveform, symbol_rate_gbd: float,
                              rolloff: float = 0.1
                              ) -> tuple[np.ndarray, np.ndarray, int]:
    """Matched RRC filter, then downsample at the highest-energy phase.

    The phase (0..sps-1) maximizing the summed dual-polarization energy is
    chosen; ties break toward the lowest index.  Output is scaled by sps so
    a noiseless shaped frame returns the symbols at unit cascade gain.

    Returns
    -------
    (sym_x, sym_y, phase)
    """
    sps = wave.sample_rate_hz / (symbol_rate_gbd * 1e9)
    if abs(sps - round(sps)) > 1e-9:
        raise DspError("sample rate is not an integer multiple of the "
                       "symbol rate")
    sps = round(sps)
    g = _rrc_spectrum(wave.n_samples, wave.sample_rate_hz,
                      symbol_rate_gbd * 1e9, rolloff)
    fx = sfft.ifft(sfft.fft(wave.x) * g)
    fy = sfft.ifft(sfft.fft(wave.y) * g)
    energies = [float(np.sum(np.abs(fx[p::sps]) ** 2)
                      + np.sum(np.abs(fy[p::sps]) ** 2))
                for p in range(sps)]
    phase = int(np.argmax(energies))
    return fx[phase::sps] * sps, fy[phase::sps] * sps, phase


def align_streams(tx: np.ndarray, rx: np.ndarray) -> int:
    """Integer symbol lag that circularly aligns rx to tx.

    Uses the FFT cross-correlation peak; a normalized peak magnitude below
    0.2 means the streams do not match and raises DspError.
    """
    if tx.size != rx.size:
        raise DspError("alignment requires equal-length streams")
    r = sfft.ifft(sfft.fft(tx) * np.conj(sfft.fft(rx)))
    peak = int(np.argmax(np.abs(r)))
    norm = np.abs(r[peak]) / (np.linalg.norm(tx) * np.linalg.norm(rx))
    if norm < 0.2:
        raise DspError(f"alignment failure: normalized correlation peak "
                       f"{norm:.3f} < 0.2")
    # r[k] correlates tx[m] with rx[m - k]; rolling rx by +peak aligns.
    return peak if peak <= tx.size // 2 else peak - tx.size


def normalize_to_reference(rx: np.ndarray, tx: np.ndarray) -> np.ndarray:
    """Global complex least-squares scale: returns c*rx minimizing
    ||tx - c*rx||^2, with c = <rx, tx> / <rx, rx>."""
    denom = np.vdot(rx, rx)
    if denom == 0:
        raise DspError("cannot normalize an all-zero stream")
    c = np.vdot(rx, tx) / denom
    return c * rx


def guard_symbols(spec: TxSpec, link: LinkSpec | None) -> int:
    """Symbols to trim from each frame edge before training or metrics.

    Twice the sum of the shaping filter span and the dispersive walk-off
    |beta2| * L * 2 pi * B in symbol periods (B the occupied bandwidth).
    Covers symbols whose channel context wraps around the FFT frame.
    """
    walkoff = 0.0
    if link is not None:
        r_hz = spec.symbol_rate_gbd * 1e9
        bw = (1.0 + spec.rolloff) * r_hz
        dt = abs(beta2_s2_per_m(link.fiber)) * link.total_length_km * 1e3 \
            * 2.0 * np.pi * bw
        walkoff = np.ceil(dt * r_hz)
    return int(2 * (spec.rrc_span_symbols + walkoff))


def build_symbol_frame(spec: TxSpec, link: LinkSpec | None,
                       transceiver_noise: bool = True,
                       symbols: TxSymbols | None = None,
                       noise_seed_tx: int | None = None,
                       noise_seed_rx: int | None = None,
                       label: str = "") -> SymbolFrame:
    """Run the full tx -> link -> rx chain and emit an aligned SymbolFrame.

    link=None is the back-to-back loopback (no propagation, no dispersion
    compensation).  Transceiver noise seeds default to values derived from
    spec.seed so a spec/link pair is fully reproducible.
    """
    if symbols is None:
        symbols = generate_symbols(spec)
    if noise_seed_tx is None or noise_seed_rx is None:
        child = np.random.SeedSequence((spec.seed, 0x7C0)).generate_state(2)
        noise_seed_tx = int(child[0]) if noise_seed_tx is None else noise_seed_tx
        noise_seed_rx = int(child[1]) if noise_seed_rx is None else noise_seed_rx

    wave = shape_waveform(spec, symbols)
    # Clean per-polarization signal power; span loss is gain-compensated,
    # so the same reference sizes both noise injections.
    ref = (float(np.mean(np.abs(wave.x) ** 2)),
           float(np.mean(np.abs(wave.y) ** 2)))
    wave = apply_transceiver_noise(wave, spec.symbol_rate_gbd,
                                   transceiver_noise, noise_seed_tx,
                                   ref_power_w=ref)
    if link is not None:
        wave = propagate_link(wave, link)
    wave = apply_transceiver_noise(wave, spec.symbol_rate_gbd,
                                   transceiver_noise, noise_seed_rx,
                                   ref_power_w=ref)
    if link is not None:
        wave = compensate_dispersion(wave, link.fiber, link.total_length_km)
    sx, sy, _ = matched_filter_downsample(wave, spec.symbol_rate_gbd,
                                          spec.rolloff)
    lag = align_streams(symbols.sym_x, sx)
    sx = np.roll(sx, lag)
    sy = np.roll(sy, lag)

    g = guard_symbols(spec, link)
    n = spec.n_symbols
    if 2 * g >= n:
        raise DspError(f"frame too short: {n} symbols but {2 * g} guards")
    sl = slice(g, n - g)
    tx_x, tx_y = symbols.sym_x[sl], symbols.sym_y[sl]
    rx_x = normalize_to_reference(sx[sl], tx_x)
    rx_y = normalize_to_reference(sy[sl], tx_y)
    return SymbolFrame(tx_x=tx_x, tx_y=tx_y, rx_x=rx_x, rx_y=rx_y,
                       symbol_rate_gbd=spec.symbol_rate_gbd, label=label)


def export_frame_csv(frame: SymbolFrame, path: str) -> None:
    """Write the frame as one row per symbol with I/Q columns per stream."""
    cols = ["index", "tx_x_i", "tx_x_q", "tx_y_i", "tx_y_q",
            "rx_x_i", "rx_x_q", "rx_y_i", "rx_y_q"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for k in range(frame.n_symbols):
            row = [k]
            for s in (frame.tx_x, frame.tx_y, frame.rx_x, frame.rx_y):
                row += [repr(float(s[k].real)), repr(float(s[k].imag))]
            w.writerow(row)
