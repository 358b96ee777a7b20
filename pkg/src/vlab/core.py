"""Core signal types, deterministic randomness, unit helpers, file I/O, resampling.

Conventions used throughout the library (fixed here, relied on everywhere):

- FFTs are unnormalized forward / 1/N inverse (numpy default).
- Power means mean |x|^2 relative to unit impedance; dB values are 10*log10
  for power quantities and 20*log10 for amplitude quantities.
- Complex baseband only: the I rail is the real part, Q the imaginary part.
- Every stochastic operation takes an explicit :class:`Rng`; identical seeds
  produce bit-identical streams on every platform (PCG64).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import signal as sig


def db(power_ratio: float | np.ndarray) -> float | np.ndarray:
    """Power ratio to decibels."""
    return 10.0 * np.log10(power_ratio)


def undb(power_db: float | np.ndarray) -> float | np.ndarray:
    """Decibels to power ratio."""
    return 10.0 ** (np.asarray(power_db) / 10.0)


def db_amplitude(amplitude_ratio: float | np.ndarray) -> float | np.ndarray:
    """Amplitude ratio to decibels (20*log10)."""
    return 20.0 * np.log10(amplitude_ratio)


def undb_amplitude(amplitude_db: float | np.ndarray) -> float | np.ndarray:
    """Decibels to amplitude ratio."""
    return 10.0 ** (np.asarray(amplitude_db) / 20.0)


class Rng:
    """Deterministic random stream (PCG64, version-pinned).

    Identical seeds produce bit-identical draws across platforms. Operations
    that need randomness take an Rng explicitly; parallel Monte-Carlo runs
    coordinate through distinct seeds only.
    """

    ALGORITHM = "pcg64"

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"

    def derive(self, *tokens: object) -> "Rng":
        """New independent Rng whose seed is a stable hash of (seed, tokens).

        Tokens are stringified, so strings and ints are safe; the derivation
        is reproducible across platforms and sessions.
        """
        h = hashlib.sha256()
        h.update(str(self.seed).encode())
        for t in tokens:
            h.update(b"|")
            h.update(str(t).encode())
        return Rng(int.from_bytes(h.digest()[:8], "little"))

    # Thin delegates over numpy's Generator -------------------------------

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def bits(self, n: int) -> np.ndarray:
        """n uniform bits as an int8 array of 0/1."""
        return self._gen.integers(0, 2, n).astype(np.int8)

    def choice(self, a, size=None, replace=True, p=None):
        return self._gen.choice(a, size=size, replace=replace, p=p)

    def shuffle(self, x):
        self._gen.shuffle(x)

    def complex_normal(self, size=None, power: float = 1.0) -> np.ndarray:
        """Circular complex Gaussian samples with the given mean power.

        I and Q halves are independent with variance power/2 each.
        """
        scale = math.sqrt(power / 2.0)
        return scale * (
            self._gen.standard_normal(size) + 1j * self._gen.standard_normal(size)
        )


@dataclass(frozen=True)
class IqSignal:
    """Complex baseband sample buffer with rate/carrier metadata.

    The universal currency between all pipeline stages. Samples are stored
    as complex128 and frozen after construction; duration is exact
    (len/sample_rate), never implicitly resampled.
    """

    samples: np.ndarray
    sample_rate_hz: float
    center_freq_hz: float = 0.0
    label: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(samples.view(np.float64))):
            raise ValueError("samples must be finite (no NaN/Inf)")
        if not (self.sample_rate_hz > 0):
            raise ValueError("sample_rate_hz must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        object.__setattr__(self, "center_freq_hz", float(self.center_freq_hz))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def power(self) -> float:
        """Mean |x|^2."""
        if len(self.samples) == 0:
            return 0.0
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(self, samples: np.ndarray, label: str | None = None) -> "IqSignal":
        """Copy of this signal with new samples, metadata preserved."""
        return replace(
            self, samples=samples, label=self.label if label is None else label
        )

    def delayed(self, n_samples: int) -> "IqSignal":
        """Integer-sample delay (zero-padded front, same length)."""
        if n_samples == 0:
            return self
        out = np.zeros_like(self.samples)
        if n_samples < len(self.samples):
            out[n_samples:] = self.samples[: len(self.samples) - n_samples]
        return self.with_samples(out)


# IQ file format ------------------------------------------------------------
#
# Binary file of interleaved 32-bit little-endian IEEE-754 floats
# I0,Q0,I1,Q1,...; a sidecar `<basename>.meta.json` holds sample_rate_hz,
# center_freq_hz and optional label/seed.


def save_iq(signal: IqSignal, path: str | Path, seed: int | None = None) -> Path:
    """Write signal to `path` plus a `.meta.json` sidecar; returns the data path."""
    path = Path(path)
    interleaved = np.empty(2 * len(signal.samples), dtype="<f4")
    interleaved[0::2] = signal.samples.real
    interleaved[1::2] = signal.samples.imag
    path.write_bytes(interleaved.tobytes())
    meta = {
        "sample_rate_hz": signal.sample_rate_hz,
        "center_freq_hz": signal.center_freq_hz,
    }
    if signal.label:
        meta["label"] = signal.label
    if seed is not None:
        meta["seed"] = int(seed)
    meta_path = path.with_name(path.name + ".meta.json") if path.suffix != ".iq" \
        else path.with_suffix(".meta.json")
    meta_path.write_text(json.dumps(meta, indent=2))
    return path


def load_iq(path: str | Path) -> IqSignal:
    """Read an IQ file written by :func:`save_iq` (or any conforming tool)."""
    path = Path(path)
    meta_path = path.with_name(path.name + ".meta.json") if path.suffix != ".iq" \
        else path.with_suffix(".meta.json")
    if not meta_path.exists():
        raise FileNotFoundError(f"missing sidecar metadata: {meta_path}")
    meta = json.loads(meta_path.read_text())
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    if len(raw) % 2:
        raise ValueError("IQ file holds an odd number of floats")
    samples = raw[0::2].astype(np.float64) + 1j * raw[1::2].astype(np.float64)
    return IqSignal(
        samples=samples,
        sample_rate_hz=float(meta["sample_rate_hz"]),
        center_freq_hz=float(meta.get("center_freq_hz", 0.0)),
        label=meta.get("label", ""),
    )


# Resampling -----------------------------------------------------------------

_MAX_RATIO_DENOMINATOR = 10_000  # documented precision of the rational ratio


def _rational_ratio(new_rate: float, old_rate: float) -> tuple[int, int]:
    frac = Fraction(new_rate / old_rate).limit_denominator(_MAX_RATIO_DENOMINATOR)
    if frac.numerator <= 0:
        raise ValueError("rate ratio must be positive")
    approx = frac.numerator / frac.denominator
    if abs(approx - new_rate / old_rate) > 1e-9 * (new_rate / old_rate):
        raise ValueError(
            f"rate ratio {new_rate}/{old_rate} has no rational approximation "
            f"with denominator <= {_MAX_RATIO_DENOMINATOR}"
        )
    return frac.numerator, frac.denominator


def _antialias_taps(up: int, down: int) -> np.ndarray:
    # Passband flat (<0.1 dB ripple) to 0.4x and >=60 dB stop from 0.5x of the
    # lower of the two rates, designed at the internal up-sampled rate.
    min_rel = 1.0 / max(up, down)  # min(old,new)/up-rate, as fraction of Nyquist
    cutoff = 0.45 * min_rel
    width = 0.1 * min_rel
    numtaps, beta = sig.kaiserord(60.0, width)
    numtaps |= 1  # odd length keeps the filter symmetric about one tap
    return sig.firwin(numtaps, cutoff, window=("kaiser", beta), fs=1.0)


def resample(signal: IqSignal, new_rate_hz: float) -> IqSignal:
    """Polyphase-resample to `new_rate_hz`.

    The rate ratio must be rational with denominator <= 10^4. Passband ripple
    is below 0.1 dB up to 0.4x the lower rate; aliases are rejected by >=60 dB.
    """
    if not (new_rate_hz > 0):
        raise ValueError("new_rate_hz must be positive")
    up, down = _rational_ratio(new_rate_hz, signal.sample_rate_hz)
    if up == down:
        return replace(signal, sample_rate_hz=new_rate_hz)
    taps = _antialias_taps(up, down)
    out = sig.resample_poly(signal.samples, up, down, window=taps)
    return IqSignal(
        samples=out,
        sample_rate_hz=new_rate_hz,
        center_freq_hz=signal.center_freq_hz,
        label=signal.label,
    )


def fractional_delay_taps(delay_samples: float, n_taps: int = 63) -> np.ndarray:
    """Windowed-sinc interpolator for the fractional part of a delay.

    Returns FIR taps whose group delay is (n_taps-1)/2 + frac(delay_samples);
    integer delay is the caller's business. Shared by the channel emulator.
    """
    frac = delay_samples - math.floor(delay_samples)
    n = np.arange(n_taps) - (n_taps - 1) / 2.0
    taps = np.sinc(n - frac) * np.hamming(n_taps)
    return taps / np.sum(taps)
