"""RF front-end emulation: every impairment the lab injects, composable in order.

Stage conventions: AWGN SNR is relative to the measured signal power; the PA
is a Rapp AM/AM model (no AM/PM); phase noise is a Wiener walk (Lorentzian
line); the quantizer is mid-rise with symmetric clipping. Chains serialize to
an ordered JSON array of {"stage": name, ...params}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sig

from .core import IqSignal, Rng, db, undb


def ebn0_to_snr_db(ebn0_db: float, bits_per_symbol: int, samples_per_symbol: float) -> float:
    """Convert Eb/N0 to the sample-level SNR used by :func:`add_awgn`.

    SNR = Eb/N0 * bits_per_symbol / samples_per_symbol when noise occupies
    the full sample bandwidth.
    """
    return ebn0_db + db(bits_per_symbol) - db(samples_per_symbol)


def add_awgn(signal: IqSignal, snr_db: float, rng: Rng) -> IqSignal:
    """Add circular complex Gaussian noise at the requested SNR.

    snr_db = +inf is the no-noise sentinel and returns the signal unchanged.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return signal
    power = signal.power()
    if power <= 0.0:
        raise ValueError("zero-power signal")
    noise_power = power / undb(snr_db)
    noise = rng.complex_normal(len(signal.samples), power=noise_power)
    return signal.with_samples(signal.samples + noise)


def apply_cfo(signal: IqSignal, offset_hz: float, phase0_rad: float = 0.0) -> IqSignal:
    """Rotate sample k by exp(j(2*pi*offset*k/fs + phase0))."""
    if abs(offset_hz) >= signal.sample_rate_hz / 2:
        raise ValueError("frequency offset would alias (|offset| >= fs/2)")
    if offset_hz == 0.0 and phase0_rad == 0.0:
        return signal
    k = np.arange(len(signal.samples))
    rot = np.exp(1j * (2.0 * np.pi * offset_hz / signal.sample_rate_hz * k + phase0_rad))
    return signal.with_samples(signal.samples * rot)


def apply_phase_noise(signal: IqSignal, linewidth_hz: float, rng: Rng) -> IqSignal:
    """Wiener phase walk with per-sample step variance 2*pi*linewidth/fs."""
    if linewidth_hz < 0:
        raise ValueError("linewidth_hz must be >= 0")
    if linewidth_hz == 0:
        return signal
    step_var = 2.0 * np.pi * linewidth_hz / signal.sample_rate_hz
    steps = rng.normal(0.0, math.sqrt(step_var), len(signal.samples))
    phase = np.cumsum(steps)
    return signal.with_samples(signal.samples * np.exp(1j * phase))


def apply_iq_impairments(
    signal: IqSignal,
    gain_imbalance_db: float = 0.0,
    quadrature_offset_deg: float = 0.0,
    dc_offset: complex = 0.0 + 0.0j,
) -> IqSignal:
    """Gain imbalance (split +/- half per rail), quadrature skew, DC offset.

    I' = gI*I + Re(dc);  Q' = gQ*(Q*cos(eps) + I*sin(eps)) + Im(dc)
    """
    g_i = 10.0 ** (+gain_imbalance_db / 40.0)
    g_q = 10.0 ** (-gain_imbalance_db / 40.0)
    eps = math.radians(quadrature_offset_deg)
    i = signal.samples.real
    q = signal.samples.imag
    i_out = g_i * i + dc_offset.real
    q_out = g_q * (q * math.cos(eps) + i * math.sin(eps)) + dc_offset.imag
    return signal.with_samples(i_out + 1j * q_out)


def image_rejection_ratio_db(gain_imbalance_db: float) -> float:
    """Analytic IRR of a pure gain imbalance: 20*log10|(1+rho)/(1-rho)|."""
    rho = 10.0 ** (-gain_imbalance_db / 20.0)  # amplitude ratio gQ/gI
    return float(20.0 * np.log10(abs((1.0 + rho) / (1.0 - rho))))


def quantize(signal: IqSignal, bits: int, full_scale: float) -> IqSignal:
    """Mid-rise uniform quantizer per rail, clipping at +/-full_scale."""
    if not (1 <= bits <= 16):
        raise ValueError("bits must be in [1, 16]")
    if not (full_scale > 0):
        raise ValueError("full_scale must be positive")
    delta = 2.0 * full_scale / (1 << bits)

    def _q(x: np.ndarray) -> np.ndarray:
        y = delta * (np.floor(x / delta) + 0.5)
        return np.clip(y, -full_scale + delta / 2.0, full_scale - delta / 2.0)

    return signal.with_samples(_q(signal.samples.real) + 1j * _q(signal.samples.imag))


def pa_nonlinearity(
    signal: IqSignal, smoothness_p: float = 2.0, input_backoff_db: float = 10.0
) -> IqSignal:
    """Rapp AM/AM: y = x / (1 + (|x|/A_sat)^(2p))^(1/(2p)); no AM/PM.

    A_sat is set so the mean input power sits input_backoff_db below
    saturation power.
    """
    if not (smoothness_p > 0):
        raise ValueError("smoothness_p must be positive")
    power = signal.power()
    if power <= 0:
        raise ValueError("zero-power signal")
    a_sat = math.sqrt(power * undb(input_backoff_db))
    amp = np.abs(signal.samples)
    gain = 1.0 / (1.0 + (amp / a_sat) ** (2.0 * smoothness_p)) ** (1.0 / (2.0 * smoothness_p))
    return signal.with_samples(signal.samples * gain)


def mixer_upconvert(
    signal: IqSignal, lo_norm_freq: float, harmonic_levels_db: list[float] | None = None
) -> IqSignal:
    """Translate to the LO and add spectral copies at k*LO (k = 2, 3, ...).

    lo_norm_freq is in cycles/sample of this (oversampled) emulation rate;
    every harmonic must stay within Nyquist.
    """
    harmonic_levels_db = harmonic_levels_db or []
    k_max = 1 + len(harmonic_levels_db)
    if abs(lo_norm_freq) * k_max >= 0.5:
        raise ValueError("harmonic beyond Nyquist of the emulation rate")
    n = np.arange(len(signal.samples))
    out = signal.samples * np.exp(2j * np.pi * lo_norm_freq * n)
    for order, level_db in enumerate(harmonic_levels_db, start=2):
        amp = 10.0 ** (level_db / 20.0)
        out = out + amp * signal.samples * np.exp(2j * np.pi * order * lo_norm_freq * n)
    return signal.with_samples(out)


def bandpass_filter(signal: IqSignal, f_lo_hz: float, f_hi_hz: float) -> IqSignal:
    """Complex FIR bandpass, >=60 dB stopband, zero net group delay.

    Transition width is 10% of the passband width (floored at fs/1000).
    """
    fs = signal.sample_rate_hz
    if not (-fs / 2 <= f_lo_hz < f_hi_hz <= fs / 2):
        raise ValueError("band edges must satisfy -fs/2 <= f_lo < f_hi <= fs/2")
    width_hz = max(0.1 * (f_hi_hz - f_lo_hz), fs / 1000.0)
    numtaps, beta = sig.kaiserord(60.0, width_hz / (fs / 2.0))
    numtaps |= 1
    cutoff = (f_hi_hz - f_lo_hz) / 2.0
    lp = sig.firwin(numtaps, cutoff, window=("kaiser", beta), fs=fs)
    center = (f_lo_hz + f_hi_hz) / 2.0
    n = np.arange(numtaps) - (numtaps - 1) / 2.0
    taps = lp * np.exp(2j * np.pi * center / fs * n)
    out = sig.fftconvolve(signal.samples, taps, mode="same")
    return signal.with_samples(out)


# Ordered chains ---------------------------------------------------------------

STAGE_NAMES = ("awgn", "cfo", "phase-noise", "iq", "quantizer", "pa", "mixer", "bpf")


@dataclass(frozen=True)
class ImpairmentChain:
    """Ordered RF front-end configuration; the empty chain is the identity.

    Stages are dicts {"stage": name, ...params} applied strictly in order.
    Stochastic stages draw from rngs derived per stage index, so a chain is
    reproducible by seed regardless of its composition.
    """

    stages: tuple = ()

    def __post_init__(self):
        stages = tuple(dict(s) for s in self.stages)
        for s in stages:
            if s.get("stage") not in STAGE_NAMES:
                raise ValueError(f"unknown stage {s.get('stage')!r}")
        object.__setattr__(self, "stages", stages)

    def apply(self, signal: IqSignal, rng: Rng) -> IqSignal:
        out = signal
        for idx, s in enumerate(self.stages):
            name = s["stage"]
            if name == "awgn":
                out = add_awgn(out, float(s["snr_db"]), rng.derive("awgn", idx))
            elif name == "cfo":
                out = apply_cfo(out, float(s["offset_hz"]), float(s.get("phase0_rad", 0.0)))
            elif name == "phase-noise":
                out = apply_phase_noise(out, float(s["linewidth_hz"]), rng.derive("pn", idx))
            elif name == "iq":
                dc = s.get("dc_offset", [0.0, 0.0])
                dc_c = complex(dc[0], dc[1]) if isinstance(dc, (list, tuple)) else complex(dc)
                out = apply_iq_impairments(
                    out,
                    float(s.get("gain_imbalance_db", 0.0)),
                    float(s.get("quadrature_offset_deg", 0.0)),
                    dc_c,
                )
            elif name == "quantizer":
                out = quantize(out, int(s["bits"]), float(s["full_scale"]))
            elif name == "pa":
                out = pa_nonlinearity(
                    out, float(s.get("smoothness_p", 2.0)), float(s["input_backoff_db"])
                )
            elif name == "mixer":
                out = mixer_upconvert(
                    out, float(s["lo_norm_freq"]), list(s.get("harmonic_levels_db", []))
                )
            elif name == "bpf":
                out = bandpass_filter(out, float(s["f_lo_hz"]), float(s["f_hi_hz"]))
        return out

    def to_json(self) -> str:
        return json.dumps(list(self.stages))

    @staticmethod
    def from_json(text: str) -> "ImpairmentChain":
        stages = json.loads(text)
        if not isinstance(stages, list):
            raise ValueError("chain JSON must be an ordered array of stages")
        return ImpairmentChain(tuple(stages))
