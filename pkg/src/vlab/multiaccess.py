"""Resource multiplexing: FDMA, TDMA, DSSS-CDMA, FHSS, and interference
scenario composition (ACI, CCI, near/far).

Walsh-Hadamard codes serve the orthogonality demos (integer-exact zero dot
products); m-sequences serve the processing-gain demos. Composite emulation
rates are the smallest power-of-2 multiple of the fastest user rate that
covers the band plan.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .analysis import spectrogram
from .core import IqSignal, Rng, resample
from .impairments import apply_cfo
from .modem import Scheme, SymbolStream, demap_symbols, map_bits
from .rxchain import gen_msequence
from .shaping import (
    PulseShape,
    group_delay_samples,
    matched_filter,
    pulse_shape,
)


# Spreading codes -------------------------------------------------------------


class CodeKind(str, enum.Enum):
    M_SEQUENCE = "m-sequence"
    WALSH = "walsh"


@dataclass(frozen=True)
class SpreadingCode:
    chips: np.ndarray  # +/-1
    kind: CodeKind

    def __post_init__(self):
        chips = np.asarray(self.chips, dtype=np.int64)
        if chips.size < 4:
            raise ValueError("code length must be >= 4")
        if not np.isin(chips, (-1, 1)).all():
            raise ValueError("chips must be +/-1")
        object.__setattr__(self, "chips", chips)

    @property
    def length(self) -> int:
        return len(self.chips)

    @property
    def processing_gain_db(self) -> float:
        return 10.0 * math.log10(self.length)


def walsh_codes(order: int) -> list[SpreadingCode]:
    """All rows of the Sylvester-Hadamard matrix of the given power-of-2 order."""
    if order < 4 or order & (order - 1):
        raise ValueError("order must be a power of two >= 4")
    h = np.array([[1]], dtype=np.int64)
    while h.shape[0] < order:
        h = np.block([[h, h], [h, -h]])
    return [SpreadingCode(chips=row, kind=CodeKind.WALSH) for row in h]


def msequence_code(degree: int) -> SpreadingCode:
    return SpreadingCode(chips=gen_msequence(degree).chips, kind=CodeKind.M_SEQUENCE)


def dsss_spread(symbols: np.ndarray, code: SpreadingCode) -> np.ndarray:
    """Chip-rate sequence: each symbol multiplied across the code."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    return np.kron(symbols, code.chips.astype(np.complex128))


def dsss_despread(chips: np.ndarray, code: SpreadingCode) -> np.ndarray:
    """Correlate-and-dump per symbol; inverse of :func:`dsss_spread`."""
    chips = np.asarray(chips, dtype=np.complex128)
    if len(chips) % code.length:
        raise ValueError("chip count is not a whole number of symbols")
    blocks = chips.reshape(-1, code.length)
    return blocks @ code.chips.astype(np.complex128) / code.length


# FDMA ------------------------------------------------------------------------


@dataclass(frozen=True)
class BandAllocation:
    user_id: str
    center_offset_hz: float
    bandwidth_hz: float


@dataclass(frozen=True)
class BandPlan:
    allocations: tuple[BandAllocation, ...]

    def __post_init__(self):
        object.__setattr__(self, "allocations", tuple(self.allocations))

    def guard_hz(self) -> list[float]:
        """Gaps between frequency-ordered neighbors (negative = overlap)."""
        allocs = sorted(self.allocations, key=lambda a: a.center_offset_hz)
        return [
            (b.center_offset_hz - b.bandwidth_hz / 2)
            - (a.center_offset_hz + a.bandwidth_hz / 2)
            for a, b in zip(allocs, allocs[1:])
        ]

    def occupied_span_hz(self) -> float:
        lo = min(a.center_offset_hz - a.bandwidth_hz / 2 for a in self.allocations)
        hi = max(a.center_offset_hz + a.bandwidth_hz / 2 for a in self.allocations)
        return hi - lo


def composite_rate_for(plan: BandPlan, max_user_rate_hz: float) -> float:
    """Smallest power-of-2 multiple of the fastest user rate covering the plan."""
    span = max(
        2.0 * max(abs(a.center_offset_hz) + a.bandwidth_hz / 2 for a in plan.allocations),
        max_user_rate_hz,
    )
    rate = max_user_rate_hz
    while rate < span:
        rate *= 2.0
    return rate


def fdma_compose(
    user_signals: dict[str, IqSignal], plan: BandPlan, composite_rate_hz: float
) -> IqSignal:
    """Shift each user to its allocation and sum at the composite rate."""
    if plan.occupied_span_hz() >= composite_rate_hz:
        raise ValueError("band plan exceeds the composite Nyquist span")
    total = None
    for alloc in plan.allocations:
        sig = user_signals[alloc.user_id]
        sig = resample(sig, composite_rate_hz)
        if alloc.center_offset_hz:
            sig = apply_cfo(sig, alloc.center_offset_hz)
        if total is None:
            total = sig.samples
        else:
            n = max(len(total), len(sig.samples))
            padded = np.zeros(n, dtype=complex)
            padded[: len(total)] = total
            padded[: len(sig.samples)] += sig.samples
            total = padded
    return IqSignal(samples=total, sample_rate_hz=composite_rate_hz, label="fdma")


# TDMA ------------------------------------------------------------------------


@dataclass(frozen=True)
class TdmaSlot:
    user_id: str
    relative_power_db: float
    payload_bits: np.ndarray


@dataclass(frozen=True)
class TdmaFrame:
    slot_len_symbols: int
    slots: tuple[TdmaSlot, ...]
    guard_symbols: int = 8

    def __post_init__(self):
        if self.slot_len_symbols < 1 or not self.slots:
            raise ValueError("need at least one slot of positive length")
        object.__setattr__(self, "slots", tuple(self.slots))


def tdma_compose(
    frame: TdmaFrame, scheme: Scheme, shape: PulseShape, rng: Rng,
    symbol_rate_hz: float = 1.0,
) -> tuple[IqSignal, list[dict]]:
    """Concatenate per-slot bursts with guard gaps; exact per-slot powers.

    Returns the composite and per-slot metadata [{user_id, start, stop,
    power_db}] in samples.
    """
    sps = shape.samples_per_symbol
    slot_len = frame.slot_len_symbols * sps
    guard_len = frame.guard_symbols * sps
    gd = group_delay_samples(shape)
    bursts = []
    boundaries = []
    cursor = 0
    for i, slot in enumerate(frame.slots):
        stream = map_bits(slot.payload_bits, scheme, rng.derive("pad", i))
        if len(stream.symbols) > frame.slot_len_symbols:
            raise ValueError(f"slot {i}: payload does not fit the slot")
        wave = pulse_shape(stream, shape, symbol_rate_hz).samples
        scale = 10.0 ** (slot.relative_power_db / 20.0)
        bursts.append((cursor, wave * scale))
        boundaries.append({
            "user_id": slot.user_id,
            "start": cursor,
            "stop": cursor + slot_len,
            "power_db": slot.relative_power_db,
        })
        cursor += slot_len + guard_len
    total = np.zeros(cursor + len(bursts[-1][1]), dtype=complex)
    for start, wave in bursts:
        total[start : start + len(wave)] += wave
    # Burst k's first symbol instant sits at start + gd; boundaries are in
    # symbol-instant terms so slot k occupies [start+gd, start+gd+slot_len).
    for b in boundaries:
        b["start"] += gd
        b["stop"] += gd
    return (
        IqSignal(samples=total, sample_rate_hz=sps * symbol_rate_hz, label="tdma"),
        boundaries,
    )


def locate_slot(
    signal: IqSignal,
    slot_index: int,
    slot_len_samples: int,
    guard_len_samples: int,
    n_slots: int,
) -> tuple[int, int]:
    """Locate slot k's [start, stop) given the frame geometry.

    Slides the known slot/guard comb over the energy envelope and picks the
    offset that maximizes total in-slot energy; robust to per-slot power
    spreads and noise.
    """
    power = np.abs(signal.samples) ** 2
    period = slot_len_samples + guard_len_samples
    frame_len = n_slots * period - guard_len_samples
    if frame_len > len(power):
        raise ValueError("signal shorter than one TDMA frame")
    csum = np.concatenate([[0.0], np.cumsum(power)])
    window = csum[slot_len_samples:] - csum[: -slot_len_samples]  # energy per slot window
    max_t0 = len(power) - frame_len
    scores = np.zeros(max_t0 + 1)
    for k in range(n_slots):
        scores += window[k * period : k * period + max_t0 + 1]
    best_t0 = int(np.argmax(scores))
    start = best_t0 + slot_index * period
    return start, start + slot_len_samples


# FHSS ------------------------------------------------------------------------


def fhss_apply(signal: IqSignal, hop_pattern_hz: list[float], hop_len_samples: int) -> IqSignal:
    """Translate successive hop-length segments by the pattern frequencies."""
    fs = signal.sample_rate_hz
    if any(abs(f) >= fs / 2 for f in hop_pattern_hz):
        raise ValueError("hop frequency beyond Nyquist")
    x = signal.samples.copy()
    n = np.arange(len(x))
    for seg in range(math.ceil(len(x) / hop_len_samples)):
        f = hop_pattern_hz[seg % len(hop_pattern_hz)]
        sl = slice(seg * hop_len_samples, min((seg + 1) * hop_len_samples, len(x)))
        x[sl] = x[sl] * np.exp(2j * np.pi * f / fs * n[sl])
    return signal.with_samples(x)


def identify_hop_pattern(
    composite: IqSignal,
    candidates: list[list[float]],
    hop_len_samples: int,
    fft_len: int = 256,
) -> int:
    """Index of the candidate pattern best matching the strongest ridges.

    Scores each candidate by summed spectral power at its hop frequencies
    across aligned hop windows (per-user power differences do the separating).
    """
    spec = spectrogram(composite, fft_len=fft_len, hop=fft_len, window="hann")
    power = 10.0 ** (spec.magnitude_db / 10.0)
    frame_starts = (np.arange(power.shape[0]) * fft_len)
    hop_of_frame = (frame_starts // hop_len_samples).astype(int)
    freqs = spec.freq_bins_hz
    scores = []
    for pattern in candidates:
        total = 0.0
        for frame, hop_idx in enumerate(hop_of_frame):
            f = pattern[hop_idx % len(pattern)]
            bin_idx = int(np.argmin(np.abs(freqs - f)))
            total += power[frame, bin_idx]
        scores.append(total)
    return int(np.argmax(scores))


# Interference scenarios --------------------------------------------------------


class InterferenceKind(str, enum.Enum):
    ACI = "aci"
    CCI = "cci"
    NEAR_FAR = "near-far"


def _shaped_user(
    bits: np.ndarray, scheme: Scheme, shape: PulseShape, rng: Rng, symbol_rate_hz: float
) -> IqSignal:
    stream = map_bits(bits, scheme, rng)
    return pulse_shape(stream, shape, symbol_rate_hz)


def single_carrier_receive(
    composite: IqSignal,
    offset_hz: float,
    scheme: Scheme,
    shape: PulseShape,
    n_symbols: int,
    burst_start: int = 0,
) -> np.ndarray:
    """Derotate one user's allocation, matched-filter, and demap its bits."""
    shifted = apply_cfo(composite, -offset_hz) if offset_hz else composite
    filtered = matched_filter(shifted, shape)
    sps = shape.samples_per_symbol
    first = burst_start + 2 * group_delay_samples(shape)
    idx = first + sps * np.arange(n_symbols)
    symbols = filtered.samples[idx]
    # Blind amplitude/phase normalization from the symbol cloud itself.
    scale = math.sqrt(np.mean(np.abs(symbols) ** 2))
    if scale > 0:
        symbols = symbols / scale
    if scheme == Scheme.QPSK:
        # 4th power of a clean QPSK cloud points at pi; negating the moment
        # centers the estimate away from the angle-wrap boundary.
        rot = np.angle(-np.mean(symbols**4)) / 4.0
        symbols = symbols * np.exp(-1j * rot)
    elif scheme == Scheme.BPSK:
        rot = np.angle(np.mean(symbols**2)) / 2.0
        symbols = symbols * np.exp(-1j * rot)
    return demap_symbols(symbols, scheme)


def compose_interference(
    kind: InterferenceKind,
    rng: Rng,
    rolloff: float = 0.35,
    symbol_rate_hz: float = 125e3,
    n_bits: int = 4000,
    power_offset_db: float = 0.0,
    dsss_user: int | None = None,
    dsss_degree: int = 5,
    scheme: Scheme = Scheme.QPSK,
) -> tuple[IqSignal, dict]:
    """Two-user interference scenario plus its hidden ground truth.

    ACI: adjacent Nyquist-width allocations with zero guard (excess bandwidth
    overlaps). CCI: both users at the same frequency. NEAR_FAR: ACI geometry
    with a power imbalance. dsss_user switches that user to DSSS-CDMA with an
    m-sequence of the given degree (chip rate = code length x symbol rate).
    """
    kind = InterferenceKind(kind)
    sps = 8
    shape = PulseShape.from_config(
        {"kind": "rrc", "rolloff": rolloff, "span": 16, "sps": sps})
    if kind == InterferenceKind.CCI:
        offsets = [0.0, 0.0]
    else:
        offsets = [-symbol_rate_hz / 2.0, +symbol_rate_hz / 2.0]
    powers_db = [0.0, power_offset_db if kind == InterferenceKind.NEAR_FAR else 0.0]

    user_bits = [rng.derive("bits", u).bits(n_bits) for u in range(2)]
    signals = []
    truth_users = []
    code = msequence_code(dsss_degree) if dsss_user is not None else None
    for u in range(2):
        u_rng = rng.derive("user", u)
        if dsss_user == u:
            stream = map_bits(user_bits[u], Scheme.BPSK, u_rng)
            chips = dsss_spread(stream.symbols, code)
            chip_stream = SymbolStream(symbols=chips, scheme=Scheme.BPSK)
            sig = pulse_shape(chip_stream, shape, symbol_rate_hz * code.length)
        else:
            sig = _shaped_user(user_bits[u], scheme, shape, u_rng, symbol_rate_hz)
        scale = 10.0 ** (powers_db[u] / 20.0)
        signals.append(sig.with_samples(sig.samples * scale))
        truth_users.append({
            "user_id": f"user{u}",
            "offset_hz": offsets[u],
            "power_db": powers_db[u],
            "bits": user_bits[u].tolist(),
            "scheme": (Scheme.BPSK if dsss_user == u else scheme).value,
            "dsss": dsss_user == u,
        })

    composite_rate = sps * symbol_rate_hz * (code.length if dsss_user is not None else 1)
    total = None
    for u, sig in enumerate(signals):
        sig = resample(sig, composite_rate) if sig.sample_rate_hz != composite_rate else sig
        sig = apply_cfo(sig, offsets[u]) if offsets[u] else sig
        if total is None:
            total = np.zeros(len(sig.samples), dtype=complex)
        n = min(len(total), len(sig.samples))
        total[:n] += sig.samples[:n]
    composite = IqSignal(samples=total, sample_rate_hz=composite_rate, label=kind.value)
    truth = {
        "kind": kind.value,
        "rolloff": rolloff,
        "symbol_rate_hz": symbol_rate_hz,
        "sps": sps,
        "seed": rng.seed,
        "users": truth_users,
    }
    return composite, truth
