"""CP-OFDM transmitter/receiver with CP-based synchronization and
per-subcarrier equalization.

Conventions: unnormalized forward FFT, 1/N inverse (numpy default); active
subcarriers sit symmetrically around an unused DC bin; time-domain output is
scaled to unit average power. The CP correlator estimates timing and the
fractional CFO only (|eps| < 0.5 subcarrier spacings; integer CFO is out of
scope and asserted away by configuration).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .analysis import evm_rms, measure_ber, papr_ccdf
from .core import IqSignal, Rng
from .modem import Scheme, constellation, demap_symbols, map_bits

_MEMORYLESS = (Scheme.BPSK, Scheme.QPSK, Scheme.PSK8, Scheme.QAM16, Scheme.QAM64)


@dataclass(frozen=True)
class OfdmConfig:
    fft_size: int = 256
    cp_len: int = 32
    n_active: int = 128
    scheme: Scheme = Scheme.QPSK
    n_symbols: int = 10
    pilot: bool = True

    def __post_init__(self):
        if self.fft_size < 64 or self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two >= 64")
        if not (1 <= self.cp_len < self.fft_size):
            raise ValueError("cp_len must be in [1, fft_size)")
        if self.n_active < 2 or self.n_active % 2 or self.n_active >= self.fft_size:
            raise ValueError("n_active must be even, >= 2, and below fft_size")
        if self.scheme not in _MEMORYLESS:
            raise ValueError("OFDM subcarriers use memoryless schemes only")
        if self.n_symbols < 1:
            raise ValueError("n_symbols must be >= 1")

    @property
    def active_bins(self) -> np.ndarray:
        """Symmetric around DC, DC excluded: -n/2..-1, +1..+n/2."""
        half = self.n_active // 2
        return np.concatenate([np.arange(-half, 0), np.arange(1, half + 1)])

    @property
    def symbol_len(self) -> int:
        return self.fft_size + self.cp_len

    @property
    def bits_per_ofdm_symbol(self) -> int:
        return self.n_active * self.scheme.bits_per_symbol

    @property
    def n_data_bits(self) -> int:
        return self.n_symbols * self.bits_per_ofdm_symbol

    def to_json(self) -> str:
        return json.dumps({
            "fft_size": self.fft_size, "cp_len": self.cp_len,
            "n_active": self.n_active, "scheme": self.scheme.value,
            "n_symbols": self.n_symbols, "pilot": self.pilot,
        })

    @staticmethod
    def from_json(text: str) -> "OfdmConfig":
        obj = json.loads(text)
        return OfdmConfig(
            fft_size=int(obj.get("fft_size", 256)),
            cp_len=int(obj.get("cp_len", 32)),
            n_active=int(obj.get("n_active", 128)),
            scheme=Scheme(obj.get("scheme", "qpsk")),
            n_symbols=int(obj.get("n_symbols", 10)),
            pilot=bool(obj.get("pilot", True)),
        )


def pilot_symbols(config: OfdmConfig) -> np.ndarray:
    """Known QPSK pilot values on the active bins (fixed, seed-independent)."""
    rng = Rng(0x0F0F).derive("ofdm-pilot", config.fft_size, config.n_active)
    labels = rng.integers(0, 4, config.n_active)
    pts = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / math.sqrt(2)
    return pts[labels]


def _amplitude_scale(config: OfdmConfig) -> float:
    # ifft is 1/N-normalized: a symbol with n_active unit bins has mean power
    # n_active / N^2; this scale restores unit average power.
    return config.fft_size / math.sqrt(config.n_active)


def ofdm_modulate(
    bits: np.ndarray, config: OfdmConfig, sample_rate_hz: float = 1.0,
    rng_pad: Rng | None = None,
) -> IqSignal:
    """Map bits onto active bins, inverse transform, prepend cyclic prefixes."""
    bits = np.asarray(bits)
    stream = map_bits(bits, config.scheme, rng_pad)
    n_needed = config.n_symbols * config.n_active
    if len(stream.symbols) != n_needed:
        raise ValueError(
            f"bit count fills {len(stream.symbols)} subcarrier symbols, need {n_needed}"
        )
    data = stream.symbols.reshape(config.n_symbols, config.n_active)
    blocks = [data]
    if config.pilot:
        blocks.insert(0, pilot_symbols(config)[None, :])
    scale = _amplitude_scale(config)
    out = []
    for row in np.concatenate(blocks, axis=0):
        bins = np.zeros(config.fft_size, dtype=complex)
        bins[config.active_bins % config.fft_size] = row
        time = np.fft.ifft(bins) * scale
        out.append(np.concatenate([time[-config.cp_len :], time]))
    return IqSignal(samples=np.concatenate(out), sample_rate_hz=sample_rate_hz,
                    label=f"cp-ofdm/{config.scheme.value}")


def cp_sync(signal: IqSignal, config: OfdmConfig) -> tuple[int, float]:
    """(theta_hat, eps_hat): CP-based timing and fractional CFO.

    theta_hat is the estimated start of the first OFDM symbol (its CP);
    eps_hat is in subcarrier-spacing units, valid for |true eps| < 0.5.
    """
    x = signal.samples
    n, cp, sym = config.fft_size, config.cp_len, config.symbol_len
    n_sym_avail = (len(x) - n) // sym
    if n_sym_avail < 1:
        raise ValueError("signal shorter than one OFDM symbol")
    prod = np.conj(x[:-n]) * x[n:]
    kernel = np.ones(cp)
    windowed = np.convolve(prod, kernel, mode="valid")
    limit = min(sym, len(windowed))
    acc = np.zeros(limit, dtype=complex)
    count = np.zeros(limit)
    for s in range(n_sym_avail):
        base = s * sym
        seg = windowed[base : base + limit]
        acc[: len(seg)] += seg
        count[: len(seg)] += 1
    acc = acc / np.maximum(count, 1)
    theta_hat = int(np.argmax(np.abs(acc)))
    eps_hat = float(np.angle(acc[theta_hat]) / (2.0 * np.pi))
    return theta_hat, eps_hat


@dataclass
class OfdmRxResult:
    bits: np.ndarray
    symbols: np.ndarray  # (n_symbols, n_active) equalized constellation
    channel_est: np.ndarray | None
    evm_pct: float
    equalized: bool


def ofdm_demodulate(
    signal: IqSignal, config: OfdmConfig, sync: tuple[int, float] | None = None
) -> OfdmRxResult:
    """CFO-correct, strip CPs, transform, one-tap equalize, hard demap.

    With a pilot, the FFT window is advanced cp/4 into the prefix as margin
    against late timing estimates; the equalizer absorbs the phase ramp.
    """
    if sync is None:
        sync = cp_sync(signal, config)
    theta, eps = sync
    if config.pilot:
        theta = max(theta - config.cp_len // 4, 0)
    x = signal.samples
    n, cp, sym = config.fft_size, config.cp_len, config.symbol_len
    k = np.arange(len(x))
    x = x * np.exp(-2j * np.pi * eps * k / n)
    n_blocks = config.n_symbols + (1 if config.pilot else 0)
    if theta + n_blocks * sym > len(x):
        raise ValueError("signal too short for the configured symbol count")
    scale = _amplitude_scale(config)
    bins_idx = config.active_bins % config.fft_size
    rows = []
    for b in range(n_blocks):
        start = theta + b * sym + cp
        block = x[start : start + n]
        rows.append(np.fft.fft(block)[bins_idx] / scale)
    rows = np.array(rows)

    channel = None
    equalized = False
    if config.pilot:
        ref = pilot_symbols(config)
        channel = rows[0] / ref
        data = rows[1:] / channel[None, :]
        equalized = True
        # Track residual common phase per symbol (decision-directed), so a
        # small leftover CFO does not outrun the frame-start pilot estimate.
        pts = np.array([p for _, p in constellation(config.scheme)])
        phase_acc = 0.0
        for m in range(data.shape[0]):
            z = data[m] * np.exp(-1j * phase_acc)
            dec = pts[np.argmin(np.abs(z[:, None] - pts[None, :]), axis=1)]
            delta = float(np.angle(np.sum(z * np.conj(dec))))
            phase_acc += delta
            data[m] = z * np.exp(-1j * delta)
    else:
        data = rows
    bits = demap_symbols(data.reshape(-1), config.scheme)
    ref_stream = map_bits(bits, config.scheme)
    evm = evm_rms(data.reshape(-1), ref_stream.symbols)
    return OfdmRxResult(bits=bits, symbols=data, channel_est=channel,
                        evm_pct=evm, equalized=equalized)


def parameter_sweep(
    grid: dict[str, list],
    rng: Rng,
    channel_fn=None,
    snr_db: float = math.inf,
    sample_rate_hz: float = 1.0,
) -> list[dict]:
    """One row per config combination: {config, papr_db_1e3, evm_pct, ber}.

    grid maps OfdmConfig field names to candidate values; channel_fn (if
    given) maps (IqSignal, Rng) -> IqSignal and is applied before AWGN.
    """
    from .impairments import add_awgn  # local import avoids a cycle

    keys = sorted(grid)
    rows = []
    for combo in product(*(grid[k] for k in keys)):
        cfg = OfdmConfig(**{**dict(zip(keys, combo)), "pilot": True})
        case_rng = rng.derive(*combo)
        bits = case_rng.bits(cfg.n_data_bits)
        tx = ofdm_modulate(bits, cfg, sample_rate_hz)
        thresholds = np.arange(0.0, 14.001, 0.05)
        papr = papr_ccdf(tx, thresholds).papr_at(1e-3)
        rx_sig = channel_fn(tx, case_rng.derive("chan")) if channel_fn else tx
        if not math.isinf(snr_db):
            rx_sig = add_awgn(rx_sig, snr_db, case_rng.derive("noise"))
        result = ofdm_demodulate(rx_sig, cfg)
        _, ber = measure_ber(bits, result.bits[: len(bits)])
        rows.append({
            "config": json.loads(cfg.to_json()),
            "papr_db_1e3": papr,
            "evm_pct": result.evm_pct,
            "ber": ber,
        })
    return rows
