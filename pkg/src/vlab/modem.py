"""Bit/symbol mapping for every modulation scheme in the training.

All constellations are unit average energy; memoryless kinds are Gray
labeled. Differential, rotating and offset kinds keep the modem memoryless
where possible: pi/2-BPSK applies its rotation at map time, pi/4-DQPSK
accumulates phase from a reference of 0, and OQPSK/MSK emit an offset symbol
plan whose half-symbol Q delay (and half-sine pulse, for MSK) is realized by
the shaping stage.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import Rng


class Scheme(str, enum.Enum):
    """Modulation scheme names as used in configs and CLI flags."""

    BPSK = "bpsk"
    PI2_BPSK = "pi2-bpsk"
    QPSK = "qpsk"
    OQPSK = "oqpsk"
    PI4_DQPSK = "pi4-dqpsk"
    PSK8 = "psk8"
    QAM16 = "qam16"
    QAM64 = "qam64"
    MSK = "msk"

    @property
    def bits_per_symbol(self) -> int:
        return _BITS_PER_SYMBOL[self]

    @property
    def has_memory(self) -> bool:
        """True for differential, rotating, and offset kinds."""
        return self in (Scheme.PI2_BPSK, Scheme.PI4_DQPSK, Scheme.OQPSK, Scheme.MSK)

    @property
    def is_offset(self) -> bool:
        """True when the Q rail is delayed half a symbol in the waveform."""
        return self in (Scheme.OQPSK, Scheme.MSK)


_BITS_PER_SYMBOL = {
    Scheme.BPSK: 1,
    Scheme.PI2_BPSK: 1,
    Scheme.QPSK: 2,
    Scheme.OQPSK: 2,
    Scheme.PI4_DQPSK: 2,
    Scheme.PSK8: 3,
    Scheme.QAM16: 4,
    Scheme.QAM64: 6,
    Scheme.MSK: 2,
}


@dataclass(frozen=True)
class SymbolStream:
    """Mapped symbols plus the metadata graders need.

    pad_bits counts random bits appended to fill the last symbol; they are
    excluded from BER accounting downstream.
    """

    symbols: np.ndarray
    scheme: Scheme
    carries_memory_state: bool = False
    pad_bits: int = 0

    def __post_init__(self):
        symbols = np.asarray(self.symbols, dtype=np.complex128)
        if not np.all(np.isfinite(symbols.view(np.float64))):
            raise ValueError("symbols must be finite")
        object.__setattr__(self, "symbols", symbols)

    def __len__(self) -> int:
        return len(self.symbols)


def _gray(k: int) -> int:
    return k ^ (k >> 1)


def _gray_inverse(g: int) -> int:
    k = 0
    while g:
        k ^= g
        g >>= 1
    return k


def _bits_tuple(value: int, width: int) -> tuple[int, ...]:
    return tuple((value >> (width - 1 - i)) & 1 for i in range(width))


def _psk_points(order: int) -> np.ndarray:
    # Point for label L sits at angle gray_inverse(L) * 2*pi/order, so walking
    # the circle steps through a Gray sequence. First point on the +I axis.
    pts = np.empty(order, dtype=np.complex128)
    for label in range(order):
        k = _gray_inverse(label)
        pts[label] = np.exp(2j * np.pi * k / order)
    return pts


def _qam_points(bits_per_axis: int) -> np.ndarray:
    # Per-axis Gray: the first half of the label selects the I level, the
    # second half the Q level; neighbors along either axis differ in one bit.
    n_levels = 1 << bits_per_axis
    levels = np.array([2 * _gray_inverse(g) - (n_levels - 1) for g in range(n_levels)],
                      dtype=float)
    scale = math.sqrt(2.0 * (n_levels**2 - 1) / 3.0)  # unit mean energy
    pts = np.empty(n_levels**2, dtype=np.complex128)
    for label in range(n_levels**2):
        i_bits = label >> bits_per_axis
        q_bits = label & (n_levels - 1)
        pts[label] = (levels[i_bits] + 1j * levels[q_bits]) / scale
    return pts


# Per-step phase increments of pi/4-DQPSK, Gray labeled.
_DQPSK_INCREMENTS = {
    (0, 0): np.pi / 4,
    (0, 1): 3 * np.pi / 4,
    (1, 1): -3 * np.pi / 4,
    (1, 0): -np.pi / 4,
}


@lru_cache(maxsize=None)
def _points(scheme: Scheme) -> np.ndarray:
    """Decision alphabet indexed by label integer (MSB-first bit packing)."""
    if scheme in (Scheme.BPSK, Scheme.PI2_BPSK):
        return np.array([1.0 + 0j, -1.0 + 0j])
    if scheme in (Scheme.QPSK, Scheme.OQPSK, Scheme.MSK):
        # b0 -> I sign, b1 -> Q sign; 0 maps to +. 00 -> (1+j)/sqrt(2).
        pts = np.empty(4, dtype=np.complex128)
        for label in range(4):
            b0, b1 = _bits_tuple(label, 2)
            pts[label] = ((1 - 2 * b0) + 1j * (1 - 2 * b1)) / math.sqrt(2)
        return pts
    if scheme == Scheme.PI4_DQPSK:
        pts = np.empty(4, dtype=np.complex128)
        for label in range(4):
            dibit = _bits_tuple(label, 2)
            pts[label] = np.exp(1j * _DQPSK_INCREMENTS[dibit])
        return pts
    if scheme == Scheme.PSK8:
        return _psk_points(8)
    if scheme == Scheme.QAM16:
        return _qam_points(2)
    if scheme == Scheme.QAM64:
        return _qam_points(3)
    raise ValueError(f"unsupported scheme {scheme}")


def constellation(scheme: Scheme) -> list[tuple[tuple[int, ...], complex]]:
    """Ordered (label bits, point) pairs; unit average energy.

    For memory-bearing kinds this lists the per-step decision alphabet
    (pi/4-DQPSK: phase increments; pi/2-BPSK: pre-rotation BPSK; OQPSK/MSK:
    the QPSK symbol plan).
    """
    pts = _points(scheme)
    width = scheme.bits_per_symbol
    return [(_bits_tuple(label, width), complex(pts[label])) for label in range(len(pts))]


def symbols_for_bits(scheme: Scheme, n_bits: int) -> int:
    """Symbols emitted for n_bits (after padding; +1 reference for DQPSK)."""
    n = -(-n_bits // scheme.bits_per_symbol)
    return n + 1 if scheme == Scheme.PI4_DQPSK else n


def _pack_labels(bits: np.ndarray, width: int) -> np.ndarray:
    groups = bits.reshape(-1, width)
    weights = 1 << np.arange(width - 1, -1, -1)
    return groups @ weights


def map_bits(bits: np.ndarray, scheme: Scheme, rng_pad: Rng | None = None) -> SymbolStream:
    """Map bits to unit-energy symbols, padding the tail with flagged random bits."""
    bits = np.asarray(bits)
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ValueError("bits must be 0 or 1")
    bits = bits.astype(np.int64)
    width = scheme.bits_per_symbol
    pad = (-len(bits)) % width
    if pad:
        if rng_pad is None:
            raise ValueError(f"{len(bits)} bits do not fill whole symbols; pass rng_pad")
        bits = np.concatenate([bits, rng_pad.bits(pad).astype(np.int64)])
    labels = _pack_labels(bits, width)
    pts = _points(scheme)

    if scheme == Scheme.PI2_BPSK:
        rotation = np.exp(1j * (np.pi / 2) * np.arange(len(labels)))
        symbols = pts[labels] * rotation
    elif scheme == Scheme.PI4_DQPSK:
        # A leading reference symbol at phase 0 carries no data; decoding
        # then reads increments only, making it rotation invariant.
        increments = np.angle(pts[labels])
        symbols = np.exp(1j * np.concatenate([[0.0], np.cumsum(increments)]))
    else:
        symbols = pts[labels]

    return SymbolStream(
        symbols=symbols,
        scheme=scheme,
        carries_memory_state=scheme.has_memory,
        pad_bits=pad,
    )


def _nearest_labels(symbols: np.ndarray, pts: np.ndarray) -> np.ndarray:
    # Hard decision: minimum Euclidean distance over the alphabet.
    d = np.abs(symbols[:, None] - pts[None, :])
    return np.argmin(d, axis=1)


def demap_symbols(symbols: np.ndarray, scheme: Scheme) -> np.ndarray:
    """Hard-decision demap; inverse of :func:`map_bits` in the noiseless case.

    Offset schemes are demapped on their QPSK symbol plan; the receiver is
    expected to have realigned the half-symbol Q delay beforehand.
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    if len(symbols) == 0:
        return np.zeros(0, dtype=np.int8)
    pts = _points(scheme)

    if scheme == Scheme.PI2_BPSK:
        symbols = symbols * np.exp(-1j * (np.pi / 2) * np.arange(len(symbols)))
    elif scheme == Scheme.PI4_DQPSK:
        if len(symbols) < 2:
            return np.zeros(0, dtype=np.int8)
        prev = symbols[:-1]
        symbols = symbols[1:] * np.conj(prev) / np.maximum(np.abs(prev), 1e-300)

    labels = _nearest_labels(symbols, pts)
    width = scheme.bits_per_symbol
    out = np.zeros((len(labels), width), dtype=np.int8)
    for i in range(width):
        out[:, i] = (labels >> (width - 1 - i)) & 1
    return out.reshape(-1)


# Blind classification --------------------------------------------------------
#
# Documented method, robust down to single-digit SNR:
#   1. Residual CFO is removed blindly: the 4th and 8th powers of the symbol
#      stream concentrate a tone at 4x/8x the per-symbol rotation for every
#      supported alphabet; the stronger normalized spectral peak wins and is
#      refined by a local search.
#   2. Each candidate is scored by a Gaussian-mixture log-likelihood with the
#      complex gain and noise variance recovered from the 2nd and 4th
#      amplitude moments (moment matching, closed form), summed over two
#      views: the symbols themselves (aligned per candidate by its own k-th
#      order phase moment, since the channel rotation is uninformative) and
#      the symbol-to-symbol increments (rotation invariant, separating twins
#      like pi/2-BPSK vs QPSK that coincide after rotation).
# Ranking is by ascending negative mean log-likelihood.


def _wire_alphabet(scheme: Scheme) -> np.ndarray:
    """Symbol values actually on the wire (marginalized over memory)."""
    if scheme == Scheme.PI2_BPSK:
        return np.array([1, 1j, -1, -1j], dtype=complex)
    if scheme == Scheme.PI4_DQPSK:
        return np.exp(1j * np.pi / 4 * np.arange(8))
    return _points(scheme)


def _estimate_symbol_cfo(symbols: np.ndarray, max_rotation: float = np.pi / 8) -> float:
    """Per-symbol rotation (radians/symbol) from 4th/8th-power spectra.

    The search is clipped to |rotation| <= max_rotation: beyond pi/8 the
    alphabets alias into each other (a pi/4 rotation per symbol maps
    pi/4-DQPSK onto plain QPSK exactly).
    """
    n = len(symbols)
    best = (0.0, 0.0)
    for order in (4, 8):
        z = (symbols / np.maximum(np.abs(symbols), 1e-300)) ** order
        nfft = 4 * n
        spec = np.abs(np.fft.fft(z, nfft))
        freqs = np.fft.fftfreq(nfft)
        allowed = np.abs(2.0 * np.pi * freqs / order) <= max_rotation
        spec = np.where(allowed, spec, 0.0)
        peak_idx = int(np.argmax(spec))
        strength = spec[peak_idx] / n
        if strength > best[0]:
            freq = np.fft.fftfreq(nfft)[peak_idx]
            # local refinement around the FFT peak
            k = np.arange(n)
            f_lo, f_hi = freq - 1.0 / nfft, freq + 1.0 / nfft
            for _ in range(40):
                f_mid = (f_lo + f_hi) / 2.0
                probe = [abs(np.sum(z * np.exp(-2j * np.pi * f * k)))
                         for f in (f_mid - (f_hi - f_lo) / 8, f_mid + (f_hi - f_lo) / 8)]
                if probe[0] > probe[1]:
                    f_hi = f_mid + (f_hi - f_lo) / 8
                else:
                    f_lo = f_mid - (f_hi - f_lo) / 8
            freq = (f_lo + f_hi) / 2.0
            best = (strength, 2.0 * np.pi * freq / order)
    return best[1]


def _moment_matched_gain_noise(symbols: np.ndarray, kurtosis: float) -> tuple[float, float]:
    """Solve E|r|^2 = g^2 + s2, E|r|^4 = g^4*k + 4 g^2 s2 + 2 s2^2."""
    p2 = float(np.mean(np.abs(symbols) ** 2))
    p4 = float(np.mean(np.abs(symbols) ** 4))
    num = 2.0 * p2**2 - p4
    den = 2.0 - kurtosis
    g2 = math.sqrt(max(num, 0.0) / den) if den > 1e-9 else p2
    g2 = min(max(g2, 1e-9), p2)
    sigma2 = max(p2 - g2, 1e-6 * p2)
    return math.sqrt(g2), sigma2


@lru_cache(maxsize=None)
def _alignment_order(scheme: Scheme) -> int:
    pts = _wire_alphabet(scheme)
    for order in (2, 4, 8):
        if abs(np.mean(pts**order)) > 0.1:
            return order
    return 8


@lru_cache(maxsize=None)
def _increment_alphabet(scheme: Scheme) -> tuple:
    """Distinct symbol-to-symbol products c_j * conj(c_i) with weights."""
    if scheme == Scheme.PI2_BPSK:
        vals, weights = np.array([1j, -1j]), np.array([0.5, 0.5])
    elif scheme == Scheme.PI4_DQPSK:
        vals = np.exp(1j * np.pi / 4 * np.array([1, 3, 5, 7]))
        weights = np.full(4, 0.25)
    else:
        pts = _wire_alphabet(scheme)
        prods = (pts[None, :] * np.conj(pts[:, None])).reshape(-1)
        rounded = np.round(prods, 9)
        vals, counts = np.unique(rounded, return_counts=True)
        weights = counts / counts.sum()
    return vals, weights


def _mixture_nll(z: np.ndarray, pts: np.ndarray, weights: np.ndarray,
                 gain: complex, sigma2: float) -> float:
    from scipy.special import logsumexp

    d2 = np.abs(z[:, None] - gain * pts[None, :]) ** 2
    log_mix = logsumexp(-d2 / sigma2, b=weights[None, :], axis=1) \
        - math.log(math.pi * sigma2)
    return float(-np.mean(log_mix))


def _em_fit(z: np.ndarray, pts: np.ndarray, weights: np.ndarray,
            gain0: complex, sigma2_0: float, iters: int = 6) -> tuple[complex, float]:
    """EM refinement of (complex gain, noise variance) for one alphabet.

    The moment-matched initial values are noisy (the 4th-moment inversion is
    ill-conditioned); a few EM passes make the variance estimate reliable.
    """
    gain, sigma2 = complex(gain0), float(sigma2_0)
    floor = 1e-5 * float(np.mean(np.abs(z) ** 2)) + 1e-30
    for _ in range(iters):
        d2 = np.abs(z[:, None] - gain * pts[None, :]) ** 2
        logw = -d2 / sigma2 + np.log(weights[None, :] + 1e-300)
        logw -= logw.max(axis=1, keepdims=True)
        resp = np.exp(logw)
        resp /= resp.sum(axis=1, keepdims=True)
        num = np.sum(resp * (z[:, None] * np.conj(pts[None, :])))
        den = np.sum(resp * (np.abs(pts[None, :]) ** 2))
        gain = num / max(den, 1e-300)
        d2 = np.abs(z[:, None] - gain * pts[None, :]) ** 2
        sigma2 = max(float(np.sum(resp * d2) / len(z)), floor)
    return gain, sigma2


def classify_modulation(
    symbols: np.ndarray, candidates: list[Scheme] | None = None
) -> list[tuple[Scheme, float]]:
    """Rank candidate schemes for a synchronized symbol stream.

    Returns (scheme, score) pairs, best first; the score is the negative
    mean log-likelihood under the candidate alphabet (lower is better).
    Needs at least 256 symbols.
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    if len(symbols) < 256:
        raise ValueError("need at least 256 symbols to classify")
    if candidates is None:
        candidates = [Scheme.BPSK, Scheme.PI2_BPSK, Scheme.QPSK, Scheme.PSK8,
                      Scheme.QAM16, Scheme.QAM64]

    omega = _estimate_symbol_cfo(symbols)
    r = symbols * np.exp(-1j * omega * np.arange(len(symbols)))
    inc = r[1:] * np.conj(r[:-1])
    inc = inc / math.sqrt(float(np.mean(np.abs(inc))) + 1e-300) ** 2

    ranking = []
    for scheme in candidates:
        pts = _wire_alphabet(scheme)
        uniform = np.full(len(pts), 1.0 / len(pts))
        kurtosis = float(np.mean(np.abs(pts) ** 4) / np.mean(np.abs(pts) ** 2) ** 2)
        gain0, sigma2_0 = _moment_matched_gain_noise(r, kurtosis)
        order = _alignment_order(scheme)
        moment = np.mean((r / np.maximum(np.abs(r), 1e-300)) ** order)
        ref_moment = np.mean(pts**order)
        theta = (np.angle(moment) - np.angle(ref_moment)) / order
        g0 = gain0 * np.exp(1j * theta)
        gain, sigma2 = _em_fit(r, pts, uniform, g0, max(sigma2_0, 1e-3))
        marginal = _mixture_nll(r, pts, uniform, gain, sigma2)

        ivals, iweights = _increment_alphabet(scheme)
        ikurt = float(np.sum(iweights * np.abs(ivals) ** 4)
                      / np.sum(iweights * np.abs(ivals) ** 2) ** 2)
        igain0, isigma2_0 = _moment_matched_gain_noise(inc, ikurt)
        # Increments are rotation invariant by construction: pin the gain to
        # be real so EM cannot rotate one twin alphabet onto another.
        d2 = np.abs(inc[:, None] - igain0 * ivals[None, :]) ** 2
        isigma2 = max(isigma2_0, 1e-3)
        for _ in range(6):
            logw = -d2 / isigma2 + np.log(iweights[None, :] + 1e-300)
            logw -= logw.max(axis=1, keepdims=True)
            resp = np.exp(logw)
            resp /= resp.sum(axis=1, keepdims=True)
            isigma2 = max(float(np.sum(resp * d2) / len(inc)),
                          1e-5 * float(np.mean(np.abs(inc) ** 2)) + 1e-30)
        increments = _mixture_nll(inc, ivals, iweights, igain0, isigma2)
        ranking.append((scheme, marginal + increments))
    ranking.sort(key=lambda pair: pair[1])
    return ranking
