"""Digital baseband receiver: m-sequences, synchronization, channel
estimation, equalization, demodulation, and message decoding.

Frame layout: two (or more) back-to-back m-sequence preambles as BPSK
symbols, followed by the payload, all pulse-shaped as one symbol stream.
Receivers process a recorded buffer offline: coarse time sync from the
repeated preamble's delayed autocorrelation, CFO from its phase, fine time
sync by cross-correlating a local shaped template, then a least-squares
single-tap channel estimate from the preamble chips.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import evm_rms, measure_ber
from .core import IqSignal, Rng
from .modem import Scheme, SymbolStream, demap_symbols, map_bits, symbols_for_bits
from .shaping import PulseShape, group_delay_samples, matched_filter, pulse_shape

# Primitive polynomial per degree, bitmask with x^n and x^0 set
# (degree 3: x^3 + x + 1 = 0b1011). Each entry is period-checked in tests.
PRIMITIVE_POLYS = {
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,
    7: 0b10001001,
    8: 0b100011101,
    9: 0b1000010001,
    10: 0b10000001001,
    11: 0b100000000101,
    12: 0b1000001010011,
    13: 0b10000000011011,
    14: 0b100010001000011,
    15: 0b1000000000000011,
    16: 0b10001000000001011,
}


@dataclass(frozen=True)
class MSequence:
    """Maximal-length LFSR sequence with the two-valued autocorrelation."""

    degree_n: int
    poly: int
    init_state: int
    chips: np.ndarray  # +/-1, length 2^n - 1

    @property
    def period(self) -> int:
        return (1 << self.degree_n) - 1

    def circular_autocorrelation(self) -> np.ndarray:
        """Integer-exact circular autocorrelation over all lags."""
        c = self.chips.astype(np.int64)
        n = len(c)
        return np.array([int(np.sum(c * np.roll(c, -lag))) for lag in range(n)])


def gen_msequence(degree: int, poly: int | None = None, init: int = 1) -> MSequence:
    """Generate an m-sequence from a primitive polynomial (Galois LFSR).

    The polynomial is validated by a full period check; a non-primitive
    polynomial is rejected.
    """
    if not (3 <= degree <= 16):
        raise ValueError("degree must be in [3, 16]")
    if poly is None:
        poly = PRIMITIVE_POLYS[degree]
    if poly >> degree != 1:
        raise ValueError("polynomial bitmask must have the x^degree term set")
    mask = (1 << degree) - 1
    init &= mask
    if init == 0:
        raise ValueError("init_state must be nonzero")
    feedback = (poly >> 1) & mask
    period = (1 << degree) - 1
    bits = np.empty(period, dtype=np.int8)
    state = init
    for i in range(period):
        out = state & 1
        bits[i] = out
        state >>= 1
        if out:
            state ^= feedback
    if state != init:
        raise ValueError(f"x^{degree} polynomial {poly:#x} is not primitive (period < 2^n - 1)")
    return MSequence(degree_n=degree, poly=poly, init_state=init,
                     chips=(1 - 2 * bits.astype(np.int64)))


# Frame description --------------------------------------------------------


@dataclass(frozen=True)
class FrameSpec:
    """Preamble/payload layout shared by transmitter and receiver."""

    preamble_degree: int = 6
    preamble_poly: int | None = None
    preamble_repeats: int = 2
    payload_scheme: Scheme = Scheme.BPSK
    payload_n_bits: int = 504
    shape: PulseShape = field(default_factory=lambda: PulseShape.from_config({"kind": "rrc"}))

    @property
    def sps(self) -> int:
        return self.shape.samples_per_symbol

    @property
    def n_preamble_symbols(self) -> int:
        return self.preamble_repeats * ((1 << self.preamble_degree) - 1)

    @property
    def seq_len_samples(self) -> int:
        return ((1 << self.preamble_degree) - 1) * self.sps

    def mseq(self) -> MSequence:
        return gen_msequence(self.preamble_degree, self.preamble_poly)

    def to_json(self) -> str:
        return json.dumps({
            "preamble": {
                "degree": self.preamble_degree,
                "poly": self.preamble_poly,
                "repeats": self.preamble_repeats,
            },
            "payload": {"scheme": self.payload_scheme.value, "n_bits": self.payload_n_bits},
            "shape": self.shape.to_config(),
            "sps": self.sps,
        })

    @staticmethod
    def from_json(text: str) -> "FrameSpec":
        obj = json.loads(text)
        shape_cfg = dict(obj.get("shape", {"kind": "rrc"}))
        if "sps" in obj:
            shape_cfg["sps"] = obj["sps"]
        pre = obj.get("preamble", {})
        pay = obj.get("payload", {})
        return FrameSpec(
            preamble_degree=int(pre.get("degree", 6)),
            preamble_poly=pre.get("poly"),
            preamble_repeats=int(pre.get("repeats", 2)),
            payload_scheme=Scheme(pay.get("scheme", "bpsk")),
            payload_n_bits=int(pay.get("n_bits", 504)),
            shape=PulseShape.from_config(shape_cfg),
        )


def text_to_bits(text: str) -> np.ndarray:
    """8-bit extended-ASCII (latin-1), most-significant-bit-first packing."""
    data = np.frombuffer(text.encode("latin-1"), dtype=np.uint8)
    return np.unpackbits(data).astype(np.int8)


def bits_to_text(bits: np.ndarray) -> str:
    bits = np.asarray(bits)
    n = (len(bits) // 8) * 8
    data = np.packbits(bits[:n].astype(np.uint8))
    return data.tobytes().decode("latin-1")


def build_frame(
    payload_bits: np.ndarray,
    spec: FrameSpec,
    symbol_rate_hz: float = 1.0,
    rng_pad: Rng | None = None,
) -> IqSignal:
    """Shape preamble + payload into one waveform.

    The first chip's symbol instant sits at the shaping group delay; sample
    index 0 is the frame start that sync stages estimate.
    """
    mseq = spec.mseq()
    preamble = np.tile(mseq.chips.astype(np.complex128), spec.preamble_repeats)
    payload = map_bits(payload_bits, spec.payload_scheme, rng_pad)
    symbols = np.concatenate([preamble, payload.symbols])
    stream = SymbolStream(symbols=symbols, scheme=spec.payload_scheme,
                          carries_memory_state=payload.carries_memory_state,
                          pad_bits=payload.pad_bits)
    return pulse_shape(stream, spec.shape, symbol_rate_hz)


def preamble_template(spec: FrameSpec, symbol_rate_hz: float = 1.0) -> np.ndarray:
    """Shaped waveform of the local preamble copy (all repeats) for fine sync.

    Using every repeat leaves a single dominant correlation peak; a
    one-sequence template would peak equally at each repeat boundary.
    """
    mseq = spec.mseq()
    chips = np.tile(mseq.chips, spec.preamble_repeats).astype(np.complex128)
    stream = SymbolStream(symbols=chips, scheme=Scheme.BPSK)
    return pulse_shape(stream, spec.shape, symbol_rate_hz).samples


# Synchronization -----------------------------------------------------------


@dataclass(frozen=True)
class CoarseSyncResult:
    start_index: int
    metric: float  # energy-normalized, in [0, 1]; detection threshold 0.5
    detected: bool


def _delayed_autocorr(x: np.ndarray, lag: int) -> tuple[np.ndarray, np.ndarray]:
    """P(theta) and energy E(theta) of the lag-L windowed autocorrelation."""
    prod = np.conj(x[:-lag]) * x[lag:]
    n_windows = len(prod) - lag + 1
    if n_windows <= 0:
        raise ValueError("signal shorter than twice the sequence length")
    kernel = np.ones(lag)
    p = np.convolve(prod, kernel, mode="valid")
    energy = np.abs(x) ** 2
    e1 = np.convolve(energy[:-lag], kernel, mode="valid")[:n_windows]
    e2 = np.convolve(energy[lag:], kernel, mode="valid")[:n_windows]
    return p, (e1 + e2) / 2.0


def _plateau_start(metric: np.ndarray, idx: int, seq_len_samples: int) -> int:
    """Start estimate from the metric maximum at `idx`.

    With two preamble repeats the metric is a triangle and its apex marks
    the start; with more repeats it grows a flat top whose left edge does.
    The flat-top case is detected by the width of the near-peak region.
    """
    level = 0.95 * metric[idx]
    left = idx
    while left > 0 and metric[left - 1] >= level:
        left -= 1
    right = idx
    while right + 1 < len(metric) and metric[right + 1] >= level:
        right += 1
    if right - left > seq_len_samples // 2:
        return left
    return idx


def coarse_sync(signal: IqSignal, seq_len_samples: int, threshold: float = 0.5) -> CoarseSyncResult:
    """Locate the repeated preamble by its lag-L delayed autocorrelation.

    The normalized metric peaks where the correlation window sits inside the
    repeated region; the start estimate is the apex (two repeats) or the
    left edge of the flat top (more repeats).
    """
    p, e = _delayed_autocorr(signal.samples, seq_len_samples)
    metric = np.abs(p) / np.maximum(e, 1e-300)
    idx = int(np.argmax(metric))
    peak = float(metric[idx])
    start = _plateau_start(metric, idx, seq_len_samples)
    return CoarseSyncResult(start_index=start, metric=peak, detected=peak >= threshold)


def _coarse_candidates(
    signal: IqSignal, seq_len_samples: int, threshold: float = 0.5, limit: int = 8
) -> list[CoarseSyncResult]:
    """All plateau starts above the detection threshold (multi-frame captures
    like TDMA composites hold several repeated preambles)."""
    p, e = _delayed_autocorr(signal.samples, seq_len_samples)
    metric = np.abs(p) / np.maximum(e, 1e-300)
    masked = metric.copy()
    results: list[CoarseSyncResult] = []
    for _ in range(limit):
        idx = int(np.argmax(masked))
        peak = float(masked[idx])
        if peak < threshold and results:
            break
        start = _plateau_start(metric, idx, seq_len_samples)
        results.append(CoarseSyncResult(start_index=start, metric=float(metric[idx]),
                                        detected=peak >= threshold))
        lo = max(0, idx - 2 * seq_len_samples)
        hi = min(len(masked), idx + 2 * seq_len_samples)
        masked[lo:hi] = 0.0
        if peak < threshold:
            break
    return results


def estimate_cfo(
    signal: IqSignal,
    start: int,
    seq_len_samples: int,
    threshold: float = 0.5,
    repeats: int = 2,
) -> tuple[float, bool]:
    """CFO from the phase of the preamble's delayed autocorrelation.

    Averages every consecutive sequence pair when the preamble repeats more
    than twice. Unambiguous for |cfo| < fs / (2 * seq_len_samples); the
    boolean is a low-confidence flag (normalized metric below threshold).
    """
    x = signal.samples
    lag = seq_len_samples
    span = (repeats - 1) * lag
    if start < 0 or start + span + lag > len(x):
        raise ValueError("start index leaves no room for the repeated preamble")
    seg = np.conj(x[start : start + span]) * x[start + lag : start + lag + span]
    p = np.sum(seg)
    energy = (
        np.sum(np.abs(x[start : start + span]) ** 2)
        + np.sum(np.abs(x[start + lag : start + lag + span]) ** 2)
    ) / 2.0
    confident = bool(np.abs(p) / max(energy, 1e-300) >= threshold)
    cfo_hat = float(np.angle(p)) * signal.sample_rate_hz / (2.0 * np.pi * lag)
    return cfo_hat, confident


def fine_sync(
    signal: IqSignal,
    template: np.ndarray,
    search_center: int | None = None,
    search_halfwidth: int | None = None,
    sidelobe_guard: int | None = None,
) -> tuple[int, float]:
    """Best template alignment by cross-correlation magnitude.

    Returns (start index, peak-to-sidelobe ratio); a ratio below 2 means low
    confidence. sidelobe_guard widens the exclusion zone around the peak so
    structural near-peaks (e.g. repeat-period images) do not count as
    sidelobes. The search window defaults to the whole signal.
    """
    x = signal.samples
    if len(template) > len(x):
        raise ValueError("template longer than signal")
    corr = np.abs(np.correlate(x, template, mode="valid"))
    if search_center is not None:
        lo = max(0, search_center - (search_halfwidth or len(corr)))
        hi = min(len(corr), search_center + (search_halfwidth or len(corr)) + 1)
        window = corr[lo:hi]
        idx = lo + int(np.argmax(window))
    else:
        idx = int(np.argmax(corr))
    peak = corr[idx]
    guard = sidelobe_guard if sidelobe_guard is not None else max(1, len(template) // 64)
    masked = corr.copy()
    masked[max(0, idx - guard) : idx + guard + 1] = 0.0
    sidelobe = float(np.max(masked)) if np.any(masked > 0) else 0.0
    ratio = float(peak / sidelobe) if sidelobe > 0 else math.inf
    return idx, ratio


def estimate_channel(rx_symbols: np.ndarray, local_chips: np.ndarray) -> complex:
    """Least-squares single-tap gain from known preamble chips."""
    rx = np.asarray(rx_symbols, dtype=np.complex128)
    c = np.asarray(local_chips, dtype=np.complex128)
    if len(rx) != len(c):
        raise ValueError("preamble symbol count mismatch")
    h = np.sum(np.conj(c) * rx) / np.sum(np.abs(c) ** 2)
    if abs(h) < 1e-6:
        raise ValueError("channel singular")
    return complex(h)


def equalize(symbols: np.ndarray, gain: complex) -> np.ndarray:
    return np.asarray(symbols) / gain


def _dd_alphabet(scheme: Scheme) -> np.ndarray:
    """The symbol values actually on the wire (not the decision alphabet):
    rotating/differential schemes visit more points than their label map."""
    from .modem import constellation

    if scheme == Scheme.PI2_BPSK:
        return np.array([1, 1j, -1, -1j], dtype=complex)
    if scheme == Scheme.PI4_DQPSK:
        return np.exp(1j * np.pi / 4 * np.arange(8))
    return np.array([p for _, p in constellation(scheme)])


def _track_phase(
    symbols: np.ndarray, preamble_chips: np.ndarray, payload_scheme: Scheme,
    loop_gain: float = 0.15,
) -> np.ndarray:
    """First-order phase tracker: data-aided over the preamble, decision-
    directed over the payload. Keeps slow phase walks (oscillator phase
    noise, residual CFO) from outrunning the one-shot channel estimate."""
    pts = _dd_alphabet(payload_scheme)
    n_pre = len(preamble_chips)
    out = np.empty_like(symbols)
    phase = 0.0
    for k, y in enumerate(symbols):
        z = y * np.exp(-1j * phase)
        if k < n_pre:
            ref = preamble_chips[k]
        else:
            ref = pts[int(np.argmin(np.abs(pts - z)))]
        err = float(np.angle(z * np.conj(ref)))
        phase += loop_gain * err
        out[k] = z
    return out


# Full pipeline -------------------------------------------------------------


@dataclass
class RxReport:
    """Stage-by-stage receiver outputs."""

    coarse_offset_samples: int = 0
    coarse_metric: float = 0.0
    cfo_hat_hz: float = 0.0
    cfo_confident: bool = True
    fine_offset_samples: int = 0
    fine_peak_to_sidelobe: float = 0.0
    channel_gain: complex = 1.0 + 0.0j
    symbols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    bits: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    message_text: str = ""
    evm_pct: float = 0.0
    ber: float | None = None
    low_confidence: bool = False


def run_receiver(
    signal: IqSignal,
    spec: FrameSpec,
    truth_bits: np.ndarray | None = None,
) -> RxReport:
    """Coarse sync -> CFO -> fine sync -> channel -> downsample -> demap -> text.

    Low-confidence flags propagate but decoding proceeds best-effort.
    """
    report = RxReport()
    sps = spec.sps
    lag = spec.seq_len_samples

    # A capture may hold several repeated preambles (TDMA composites); pick
    # the candidate whose normalized correlation against *our* m-sequence
    # template is strongest.
    template = preamble_template(spec, signal.sample_rate_hz / sps)
    t_norm = float(np.linalg.norm(template))
    k = np.arange(len(signal.samples))
    best = None
    for candidate in _coarse_candidates(signal, lag):
        cfo_c, confident = estimate_cfo(signal, candidate.start_index, lag,
                                        repeats=spec.preamble_repeats)
        derot_c = signal.with_samples(
            signal.samples * np.exp(-2j * np.pi * cfo_c / signal.sample_rate_hz * k))
        fine_idx, ratio = fine_sync(
            derot_c, template, search_center=candidate.start_index,
            search_halfwidth=lag, sidelobe_guard=lag + sps)
        window = derot_c.samples[fine_idx : fine_idx + len(template)]
        local_norm = float(np.linalg.norm(window))
        peak = float(np.abs(np.vdot(template, window)))
        ncc = peak / (t_norm * local_norm) if local_norm > 0 else 0.0
        if best is None or ncc > best[0]:
            best = (ncc, candidate, cfo_c, confident, derot_c, fine_idx, ratio)
    assert best is not None
    _, coarse, cfo_hat, confident, derot, fine_idx, ratio = best

    report.coarse_offset_samples = coarse.start_index
    report.coarse_metric = coarse.metric
    report.cfo_hat_hz = cfo_hat
    report.cfo_confident = confident
    report.fine_offset_samples = fine_idx
    report.fine_peak_to_sidelobe = ratio

    filtered = matched_filter(derot, spec.shape)
    gd = 2 * group_delay_samples(spec.shape)
    n_pre = spec.n_preamble_symbols
    n_payload = symbols_for_bits(spec.payload_scheme, spec.payload_n_bits)
    first = fine_idx + gd
    idx = first + sps * np.arange(n_pre + n_payload)
    if idx[-1] >= len(filtered.samples):
        raise ValueError("frame truncated: payload extends past the recorded buffer")
    raw_symbols = filtered.samples[idx]

    chips = np.tile(spec.mseq().chips, spec.preamble_repeats)
    gain = estimate_channel(raw_symbols[:n_pre], chips)
    report.channel_gain = gain
    eq = equalize(raw_symbols, gain)
    eq = _track_phase(eq, chips, spec.payload_scheme)

    report.symbols = eq[n_pre:]
    report.evm_pct = evm_rms(eq[:n_pre], chips.astype(np.complex128))
    bits = demap_symbols(eq[n_pre:], spec.payload_scheme)[: spec.payload_n_bits]
    report.bits = bits
    report.message_text = bits_to_text(bits)
    report.low_confidence = (not confident) or ratio < 2.0 or not coarse.detected
    if truth_bits is not None:
        _, report.ber = measure_ber(truth_bits, bits)
    return report
