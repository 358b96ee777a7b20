"""Measurement views: PSD, spectrogram, power CCDF, EVM, eye diagram, BER.

These are the "virtual instrument" read-outs observed on the analyzer side of
every lab. All views are pure functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import IqSignal


@dataclass(frozen=True)
class PsdEstimate:
    """Two-sided power spectral density, baseband-centered.

    power_db is dB relative to unit power per Hz; integrating the linear PSD
    over the bins recovers the signal's mean-square power (within window
    effects, < 0.5 dB).
    """

    freq_bins_hz: np.ndarray
    power_db: np.ndarray
    resolution_bw_hz: float

    def __post_init__(self):
        if len(self.freq_bins_hz) != len(self.power_db):
            raise ValueError("freq_bins_hz and power_db must have equal length")
        if np.any(np.diff(self.freq_bins_hz) <= 0):
            raise ValueError("freq_bins_hz must be strictly increasing")
        if not (self.resolution_bw_hz > 0):
            raise ValueError("resolution_bw_hz must be positive")

    def total_power(self) -> float:
        """Integrated power (linear), using the bin spacing as df."""
        df = float(self.freq_bins_hz[1] - self.freq_bins_hz[0])
        return float(np.sum(10.0 ** (self.power_db / 10.0)) * df)

    def band_power(self, f_lo_hz: float, f_hi_hz: float) -> float:
        """Integrated power (linear) over [f_lo_hz, f_hi_hz]."""
        df = float(self.freq_bins_hz[1] - self.freq_bins_hz[0])
        mask = (self.freq_bins_hz >= f_lo_hz) & (self.freq_bins_hz <= f_hi_hz)
        return float(np.sum(10.0 ** (self.power_db[mask] / 10.0)) * df)

    def peak_freq_hz(self) -> float:
        return float(self.freq_bins_hz[int(np.argmax(self.power_db))])


@dataclass(frozen=True)
class CcdfCurve:
    """P(instantaneous power > mean power + threshold_db)."""

    threshold_db: np.ndarray
    prob_exceed: np.ndarray

    def __post_init__(self):
        if len(self.threshold_db) != len(self.prob_exceed):
            raise ValueError("threshold_db and prob_exceed must have equal length")
        if np.any(np.diff(self.prob_exceed) > 1e-15):
            raise ValueError("prob_exceed must be non-increasing")

    def papr_at(self, prob: float) -> float:
        """Smallest threshold (dB) whose exceedance probability is <= prob."""
        idx = np.nonzero(self.prob_exceed <= prob)[0]
        if len(idx) == 0:
            return float(self.threshold_db[-1])
        return float(self.threshold_db[int(idx[0])])


@dataclass(frozen=True)
class EyeGrid:
    """Stacked 2-symbol-period traces of one rail."""

    traces: np.ndarray  # (n_traces, 2*samples_per_symbol)
    samples_per_symbol: int
    rail: str  # "i" or "q"

    def __post_init__(self):
        if self.traces.ndim != 2 or self.traces.shape[1] != 2 * self.samples_per_symbol:
            raise ValueError("each trace must span exactly two symbol periods")
        if self.rail not in ("i", "q"):
            raise ValueError("rail must be 'i' or 'q'")

    def opening_at_center(self) -> float:
        """Vertical gap between the lowest high-rail and highest low-rail
        crossing at the central sampling column. Zero when the eye is shut."""
        col = self.traces[:, self.samples_per_symbol]
        hi = col[col > 0]
        lo = col[col <= 0]
        if len(hi) == 0 or len(lo) == 0:
            return 0.0
        return float(hi.min() - lo.max())


@dataclass(frozen=True)
class Spectrogram:
    """Short-time magnitude spectrum; rows are frames, columns frequency bins."""

    magnitude_db: np.ndarray  # (n_frames, fft_len)
    freq_bins_hz: np.ndarray
    frame_times_s: np.ndarray

    def ridge_hz(self) -> np.ndarray:
        """Per-frame frequency of the strongest bin."""
        return self.freq_bins_hz[np.argmax(self.magnitude_db, axis=1)]


_WINDOWS = {
    "rect": lambda n: np.ones(n),
    "hann": lambda n: np.hanning(n),
}


def _window(name: str, n: int) -> np.ndarray:
    try:
        return _WINDOWS[name](n)
    except KeyError:
        raise ValueError(f"unknown window {name!r}; expected one of {sorted(_WINDOWS)}")


def welch_psd(
    signal: IqSignal,
    segment_len: int = 1024,
    overlap_frac: float = 0.5,
    window: str = "hann",
) -> PsdEstimate:
    """Welch-averaged two-sided PSD centered at 0 Hz offset.

    Window power is compensated so integrating the estimate recovers the
    signal's mean-square power.
    """
    x = signal.samples
    fs = signal.sample_rate_hz
    if segment_len > len(x):
        raise ValueError("insufficient samples: signal shorter than one segment")
    if not (0 <= overlap_frac < 1):
        raise ValueError("overlap_frac must be in [0, 1)")
    w = _window(window, segment_len)
    hop = max(1, int(round(segment_len * (1.0 - overlap_frac))))
    n_segments = 1 + (len(x) - segment_len) // hop
    acc = np.zeros(segment_len)
    for k in range(n_segments):
        seg = x[k * hop : k * hop + segment_len] * w
        acc += np.abs(np.fft.fft(seg)) ** 2
    # |FFT|^2 / (fs * sum(w^2)) is the density; average over segments.
    psd = acc / (n_segments * fs * np.sum(w**2))
    psd = np.fft.fftshift(psd)
    freqs = np.fft.fftshift(np.fft.fftfreq(segment_len, d=1.0 / fs))
    enbw_hz = fs * np.sum(w**2) / np.sum(w) ** 2
    floor = np.finfo(float).tiny
    return PsdEstimate(
        freq_bins_hz=freqs,
        power_db=10.0 * np.log10(np.maximum(psd, floor)),
        resolution_bw_hz=float(enbw_hz),
    )


def spectrogram(
    signal: IqSignal, fft_len: int = 256, hop: int = 64, window: str = "hann"
) -> Spectrogram:
    """Short-time spectrum; frame k covers samples [k*hop, k*hop + fft_len)."""
    x = signal.samples
    if len(x) == 0:
        raise ValueError("empty signal")
    if not (fft_len >= hop >= 1):
        raise ValueError("need fft_len >= hop >= 1")
    if len(x) < fft_len:
        raise ValueError("signal shorter than one frame")
    w = _window(window, fft_len)
    n_frames = 1 + (len(x) - fft_len) // hop
    frames = np.lib.stride_tricks.sliding_window_view(x, fft_len)[::hop][:n_frames]
    spec = np.fft.fftshift(np.fft.fft(frames * w, axis=1), axes=1)
    floor = np.finfo(float).tiny
    mag_db = 20.0 * np.log10(np.maximum(np.abs(spec), floor))
    fs = signal.sample_rate_hz
    freqs = np.fft.fftshift(np.fft.fftfreq(fft_len, d=1.0 / fs))
    times = (np.arange(n_frames) * hop + fft_len / 2.0) / fs
    return Spectrogram(magnitude_db=mag_db, freq_bins_hz=freqs, frame_times_s=times)


def papr_ccdf(signal: IqSignal, thresholds_db: np.ndarray) -> CcdfCurve:
    """CCDF of instantaneous-over-mean power at the given dB thresholds."""
    power = np.abs(signal.samples) ** 2
    if len(power) == 0:
        raise ValueError("empty signal")
    mean_power = float(np.mean(power))
    if mean_power <= 0.0:
        raise ValueError("zero mean power")
    thresholds_db = np.asarray(thresholds_db, dtype=float)
    if np.any(np.diff(thresholds_db) <= 0):
        raise ValueError("thresholds_db must be strictly increasing")
    levels = mean_power * 10.0 ** (thresholds_db / 10.0)
    prob = np.array([np.mean(power > lvl) for lvl in levels])
    return CcdfCurve(threshold_db=thresholds_db, prob_exceed=prob)


def evm_rms(rx_symbols: np.ndarray, ref_symbols: np.ndarray) -> float:
    """RMS error vector magnitude in percent, normalized by reference RMS."""
    rx = np.asarray(rx_symbols)
    ref = np.asarray(ref_symbols)
    if len(rx) != len(ref):
        raise ValueError("rx and reference symbol counts differ")
    if len(ref) == 0:
        raise ValueError("need at least one symbol")
    err = np.mean(np.abs(rx - ref) ** 2)
    ref_pwr = np.mean(np.abs(ref) ** 2)
    return float(100.0 * np.sqrt(err / ref_pwr))


def eye_diagram(
    signal: IqSignal, samples_per_symbol: int, offset: int = 0, rail: str = "i"
) -> EyeGrid:
    """Fold the chosen rail into non-overlapping 2-symbol traces.

    The partial trace at the tail is discarded.
    """
    if samples_per_symbol < 2:
        raise ValueError("samples_per_symbol must be >= 2")
    if len(signal.samples) - offset < 2 * samples_per_symbol:
        raise ValueError("signal shorter than one eye trace")
    x = signal.samples.real if rail == "i" else signal.samples.imag
    x = x[offset:]
    width = 2 * samples_per_symbol
    n_traces = len(x) // width
    traces = x[: n_traces * width].reshape(n_traces, width)
    return EyeGrid(traces=traces, samples_per_symbol=samples_per_symbol, rail=rail)


def measure_ber(tx_bits: np.ndarray, rx_bits: np.ndarray) -> tuple[int, float]:
    """(bit errors, error rate) between two equal-length bit sequences."""
    tx = np.asarray(tx_bits)
    rx = np.asarray(rx_bits)
    if len(tx) != len(rx):
        raise ValueError("bit sequence lengths differ")
    if len(tx) == 0:
        raise ValueError("need at least one bit")
    errors = int(np.sum(tx != rx))
    return errors, errors / len(tx)
