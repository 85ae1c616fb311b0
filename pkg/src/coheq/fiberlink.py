"""Nonlinear fiber propagation and lumped amplification.

Dual-polarization field propagation over multi-span links using the
symmetric split-step Fourier method on the polarization-averaged nonlinear
Schroedinger equation (Manakov form, 8/9 nonlinear factor):

    dA/dz = -(alpha/2) A - i (beta2/2) d2A/dt2
            + i (8/9) gamma (|Ax|^2 + |Ay|^2) A

Each step applies a linear half step in the frequency domain, a full
nonlinear phase rotation in the time domain, then another linear half step;
adjacent half steps between nonlinear steps are merged.  The frame is one
FFT block, so boundaries are periodic; downstream processing trims guard
symbols at the frame edges.

Span loss is fully compensated by a lumped amplifier whose ASE is modeled
as white complex Gaussian noise per polarization with variance

    sigma^2 = h nu n_sp (G - 1) f_s,   n_sp = 10^(NF/10) / 2,

the population-inversion approximation of a noise figure NF amplifier.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np
import scipy.constants
import scipy.fft as sfft

from .txsig import Waveform

__all__ = [
    "FiberSpec",
    "LinkSpec",
    "beta2_s2_per_m",
    "propagate_span",
    "amplify_with_ase",
    "propagate_link",
    "dump_waveform",
    "load_waveform",
    "TWC_FIBER",
    "SSMF_FIBER",
]

_C = scipy.constants.c
_H = scipy.constants.h

MANAKOV_POL_FACTOR = 8.0 / 9.0


@dataclass(frozen=True)
class FiberSpec:
    """Fiber constants in engineering units."""

    alpha_db_km: float
    dispersion_ps_nm_km: float
    gamma_w_km: float
    wavelength_nm: float = 1550.0


# Stock fiber types used throughout the experiments.
TWC_FIBER = FiberSpec(alpha_db_km=0.23, dispersion_ps_nm_km=2.8,
                      gamma_w_km=2.5)
SSMF_FIBER = FiberSpec(alpha_db_km=0.2, dispersion_ps_nm_km=17.0,
                       gamma_w_km=1.2)


@dataclass
class LinkSpec:
    """A chain of identical amplified spans."""

    fiber: FiberSpec
    n_spans: int = 9
    span_km: float = 50.0
    step_km: float = 1.0
    edfa_nf_db: float = 4.5
    ase_on: bool = True
    noise_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_spans < 1:
            raise ValueError("n_spans must be >= 1")
        if self.span_km <= 0 or self.step_km <= 0:
            raise ValueError("span_km and step_km must be positive")
        n = self.span_km / self.step_km
        if abs(n - round(n)) > 1e-9:
            raise ValueError("step_km must divide span_km")

    @property
    def total_length_km(self) -> float:
        return self.n_spans * self.span_km

    @property
    def span_gain_db(self) -> float:
        """Amplifier gain that exactly compensates span loss."""
        return self.fiber.alpha_db_km * self.span_km


def beta2_s2_per_m(fiber: FiberSpec) -> float:
    """Group-velocity dispersion beta2 = -D lambda^2 / (2 pi c) in s^2/m."""
    d_si = fiber.dispersion_ps_nm_km * 1e-6  # s/m^2
    lam = fiber.wavelength_nm * 1e-9
    return -d_si * lam ** 2 / (2.0 * np.pi * _C)


def _alpha_per_m(fiber: FiberSpec) -> float:
    # Power attenuation in natural units; the field decays at alpha/2.
    return fiber.alpha_db_km * np.log(10.0) / 10.0 / 1e3


def propagate_span(wave: Waveform, fiber: FiberSpec, span_km: float,
                   step_km: float,
                   pol_factor: float = MANAKOV_POL_FACTOR) -> Waveform:
    """Propagate one span with the symmetric split-step Fourier method.

    Parameters
    ----------
    wave : Waveform
        Input field; must be finite everywhere.
    fiber : FiberSpec
    span_km, step_km : float
        step_km must divide span_km to within 1e-9 steps.
    pol_factor : float
        Nonlinear polarization-averaging factor (8/9 for the Manakov model;
        1.0 reduces to scalar self-phase modulation per polarization pair).

    Returns
    -------
    Waveform
        Field after span_km of fiber, before any amplification.
    """
    n_steps = span_km / step_km
    if abs(n_steps - round(n_steps)) > 1e-9:
        raise ValueError("step_km must divide span_km")
    n_steps = int(round(n_steps))
    if not (np.all(np.isfinite(wave.x)) and np.all(np.isfinite(wave.y))):
        raise ValueError("non-finite samples in input waveform")

    h_m = step_km * 1e3
    beta2 = beta2_s2_per_m(fiber)
    alpha = _alpha_per_m(fiber)
    gamma_m = fiber.gamma_w_km * 1e-3
    omega = 2.0 * np.pi * sfft.fftfreq(wave.n_samples,
                                       d=1.0 / wave.sample_rate_hz)
    lin_half = np.exp((-alpha / 2.0 + 0.5j * beta2 * omega ** 2) * (h_m / 2))
    lin_full = lin_half ** 2

    x = sfft.fft(wave.x) * lin_half
    y = sfft.fft(wave.y) * lin_half
    for k in range(n_steps):
        x = sfft.ifft(x)
        y = sfft.ifft(y)
        phi = (pol_factor * gamma_m * h_m) * (np.abs(x) ** 2
                                              + np.abs(y) ** 2)
        rot = np.exp(1j * phi)
        x = sfft.fft(x * rot)
        y = sfft.fft(y * rot)
        op = lin_full if k < n_steps - 1 else lin_half
        x = x * op
        y = y * op
    return Waveform(x=sfft.ifft(x), y=sfft.ifft(y),
                    sample_rate_hz=wave.sample_rate_hz)


def amplify_with_ase(wave: Waveform, gain_db: float, nf_db: float,
                     ase_on: bool, rng: np.random.Generator,
                     wavelength_nm: float = 1550.0) -> Waveform:
    """Flat gain plus (optionally) white ASE noise.

    With ase_on=False the field is scaled by exactly sqrt(G).  Otherwise
    each polarization receives independent complex Gaussian noise with
    per-sample variance h nu n_sp (G-1) f_s, n_sp = 10^(NF/10)/2, drawn
    from rng in the fixed order (x, y).
    """
    g_lin = 10.0 ** (gain_db / 10.0)
    amp = np.sqrt(g_lin)
    x = wave.x * amp
    y = wave.y * amp
    if ase_on:
        nu = _C / (wavelength_nm * 1e-9)
        n_sp = 10.0 ** (nf_db / 10.0) / 2.0
        var = _H * nu * n_sp * (g_lin - 1.0) * wave.sample_rate_hz
        sig = np.sqrt(var / 2.0)
        n = wave.n_samples
        x = x + sig * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        y = y + sig * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return Waveform(x=x, y=y, sample_rate_hz=wave.sample_rate_hz)


def propagate_link(wave: Waveform, link: LinkSpec) -> Waveform:
    """Propagate through n_spans of fiber, amplifying after each span.

    One PRNG seeded with link.noise_seed feeds every amplifier in span
    order, so the whole link is reproducible from (input, LinkSpec).
    """
    rng = np.random.default_rng(link.noise_seed)
    out = wave
    for _ in range(link.n_spans):
        out = propagate_span(out, link.fiber, link.span_km, link.step_km)
        out = amplify_with_ase(out, link.span_gain_db, link.edfa_nf_db,
                               link.ase_on, rng,
                               wavelength_nm=link.fiber.wavelength_nm)
    return out


_WAVE_MAGIC = b"WAVE"
_WAVE_HEADER = struct.Struct("<4sIQd8x")  # magic, version, n, fs, reserved


def dump_waveform(wave: Waveform, path: str) -> None:
    """Binary waveform dump: 32-byte header then x and y as interleaved
    little-endian float64 (I, Q) pairs, followed by a CRC32 of the payload."""
    payload = bytearray()
    for pol in (wave.x, wave.y):
        iq = np.empty(2 * pol.size)
        iq[0::2] = pol.real
        iq[1::2] = pol.imag
        payload += iq.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(_WAVE_HEADER.pack(_WAVE_MAGIC, 1, wave.n_samples,
                                   wave.sample_rate_hz))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(bytes(payload))))


def load_waveform(path: str) -> Waveform:
    """Inverse of dump_waveform with header and checksum validation."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _WAVE_HEADER.size + 4:
        raise ValueError("truncated waveform file")
    magic, version, n, fs = _WAVE_HEADER.unpack_from(raw)
    if magic != _WAVE_MAGIC:
        raise ValueError("bad magic; not a waveform dump")
    if version != 1:
        raise ValueError(f"unsupported waveform dump version {version}")
    need = _WAVE_HEADER.size + 2 * n * 2 * 8 + 4
    if len(raw) != need:
        raise ValueError("unexpected end of waveform dump")
    payload = raw[_WAVE_HEADER.size:-4]
    (crc,) = struct.unpack("<I", raw[-4:])
    if crc != zlib.crc32(payload):
        raise ValueError("waveform dump checksum mismatch")
    flat = np.frombuffer(payload, dtype="<f8")
    half = flat.size // 2
    def _pol(seg):
        return (seg[0::2] + 1j * seg[1::2]).astype(np.complex128)
    return Waveform(x=_pol(flat[:half]), y=_pol(flat[half:]),
                    sample_rate_hz=fs)
