"""Propagation emulation: path loss with shadowing, tapped delay lines,
Jakes and rotating-fan Doppler, and the coherence rules of thumb.

Tap gains are normalized so long-run mean received power equals transmitted
power; all fading processes are reproducible by seed. Fractional tap delays
reuse the windowed-sinc interpolator from :mod:`vlab.core`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sig

from .core import IqSignal, Rng, fractional_delay_taps, undb


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance path loss: loss(d) = ref + 10*n*log10(d/d0) + shadowing."""

    exponent_n: float
    ref_loss_db_at_d0: float
    d0_m: float = 1.0
    shadowing_sigma_db: float = 0.0

    def __post_init__(self):
        if not (self.d0_m > 0):
            raise ValueError("d0_m must be positive")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing_sigma_db must be >= 0")

    def loss_db(self, distance_m: float, rng: Rng | None = None) -> float:
        """One realization of the loss at `distance_m` (one shadowing draw)."""
        if distance_m < self.d0_m:
            raise ValueError("distance must be >= d0")
        loss = self.ref_loss_db_at_d0 + 10.0 * self.exponent_n * math.log10(
            distance_m / self.d0_m
        )
        if self.shadowing_sigma_db > 0:
            if rng is None:
                raise ValueError("shadowing requires an rng")
            loss += self.shadowing_sigma_db * float(rng.normal())
        return loss


def path_loss_apply(
    signal: IqSignal, model: PathLossModel, distance_m: float, rng: Rng
) -> IqSignal:
    """Attenuate by one loss realization (amplitude scale 10^(-loss/20))."""
    loss = model.loss_db(distance_m, rng)
    return signal.with_samples(signal.samples * 10.0 ** (-loss / 20.0))


def fit_path_loss(
    measurements: list[tuple[float, float]], d0_m: float
) -> tuple[float, float, float]:
    """Least-squares (n, ref_loss, sigma) from (distance, loss_db) pairs.

    The dB values are attenuations (increasing with distance); negate
    received powers before fitting. sigma is the residual standard deviation.
    """
    if len(measurements) < 2:
        raise ValueError("need at least two measurements")
    d = np.array([m[0] for m in measurements], dtype=float)
    loss = np.array([m[1] for m in measurements], dtype=float)
    if np.any(d <= 0):
        raise ValueError("distances must be positive")
    if np.allclose(d, d[0]):
        raise ValueError("degenerate fit: all distances equal")
    x = 10.0 * np.log10(d / d0_m)
    slope, intercept = np.polyfit(x, loss, 1)
    residuals = loss - (intercept + slope * x)
    sigma = float(np.std(residuals))
    return float(slope), float(intercept), sigma


# Tapped delay lines -----------------------------------------------------------


@dataclass(frozen=True)
class TdlTap:
    """One path: delay, average power, and its Doppler behavior.

    doppler is {"kind": "static"} or {"kind": "jakes", "f_max_hz": ...} or
    {"kind": "fan", "rot_hz": ..., "blades": ..., "f_max_hz": ..., "duty": ...}.
    """

    delay_s: float
    avg_power_db: float
    doppler: dict = field(default_factory=lambda: {"kind": "static"})

    def __post_init__(self):
        if self.delay_s < 0:
            raise ValueError("delay_s must be >= 0")
        if self.doppler.get("kind") not in ("static", "jakes", "fan"):
            raise ValueError(f"unknown doppler kind {self.doppler.get('kind')!r}")


@dataclass(frozen=True)
class TdlChannel:
    taps: tuple[TdlTap, ...]

    def __post_init__(self):
        taps = tuple(self.taps)
        if not taps:
            raise ValueError("need at least one tap")
        delays = [t.delay_s for t in taps]
        if any(b <= a for a, b in zip(delays, delays[1:])):
            raise ValueError("tap delays must be strictly increasing")
        object.__setattr__(self, "taps", taps)

    def normalized_powers(self) -> np.ndarray:
        p = undb(np.array([t.avg_power_db for t in self.taps]))
        return p / p.sum()

    @property
    def rms_delay_spread_s(self) -> float:
        p = self.normalized_powers()
        d = np.array([t.delay_s for t in self.taps])
        mean = float(np.sum(p * d))
        return float(math.sqrt(max(np.sum(p * d**2) - mean**2, 0.0)))

    @property
    def max_doppler_hz(self) -> float:
        f = 0.0
        for t in self.taps:
            if t.doppler["kind"] in ("jakes", "fan"):
                f = max(f, float(t.doppler.get("f_max_hz", 0.0)))
        return f

    def to_json(self, seed: int | None = None) -> str:
        obj = {
            "taps": [
                {"delay_s": t.delay_s, "power_db": t.avg_power_db, "doppler": t.doppler}
                for t in self.taps
            ]
        }
        if seed is not None:
            obj["seed"] = seed
        return json.dumps(obj)

    @staticmethod
    def from_json(text: str) -> "TdlChannel":
        obj = json.loads(text)
        taps = tuple(
            TdlTap(
                delay_s=float(t["delay_s"]),
                avg_power_db=float(t["power_db"]),
                doppler=dict(t.get("doppler", {"kind": "static"})),
            )
            for t in obj["taps"]
        )
        return TdlChannel(taps)


_JAKES_SINUSOIDS = 32


def _jakes_gain(n_samples: int, fs: float, f_max_hz: float, rng: Rng) -> np.ndarray:
    """Sum-of-sinusoids Rayleigh process, unit average power, support +-f_max."""
    m = np.arange(1, _JAKES_SINUSOIDS + 1)
    theta = rng.uniform(-np.pi, np.pi)
    alpha = (2.0 * np.pi * m - np.pi + theta) / (4.0 * _JAKES_SINUSOIDS)
    phi = rng.uniform(-np.pi, np.pi, _JAKES_SINUSOIDS)
    psi = rng.uniform(-np.pi, np.pi, _JAKES_SINUSOIDS)
    t = np.arange(n_samples) / fs
    arg = 2.0 * np.pi * f_max_hz * np.outer(t, np.cos(alpha))
    h = np.cos(arg + phi).sum(axis=1) + 1j * np.sin(arg + psi).sum(axis=1)
    return h / math.sqrt(_JAKES_SINUSOIDS)


def _fan_gain(
    n_samples: int,
    fs: float,
    rot_hz: float,
    blades: int,
    f_max_hz: float,
    duty: float,
    rng: Rng,
) -> np.ndarray:
    """Static LOS plus a blade reflection gated at the blade rate and swung
    by a sinusoidal Doppler of peak f_max; unit average power."""
    blade_rate = rot_hz * blades
    if blade_rate >= fs / 4:
        raise ValueError("blade rate must stay below fs/4")
    t = np.arange(n_samples) / fs
    if blade_rate > 0 and duty > 0:
        gate_phase = (t * blade_rate + float(rng.uniform())) % 1.0
        gate = (gate_phase < duty).astype(float)
        theta = (f_max_hz / blade_rate) * np.sin(2.0 * np.pi * blade_rate * t)
        reflect = gate * np.exp(1j * (theta + float(rng.uniform(-np.pi, np.pi))))
        scale = 1.0 / math.sqrt(1.0 + duty)
    else:
        reflect = np.zeros(n_samples, dtype=complex)
        scale = 1.0
    return scale * (1.0 + reflect)


def _tap_gain(tap: TdlTap, n_samples: int, fs: float, rng: Rng) -> np.ndarray:
    kind = tap.doppler["kind"]
    if kind == "static":
        return np.full(n_samples, rng.complex_normal(power=1.0))
    if kind == "jakes":
        return _jakes_gain(n_samples, fs, float(tap.doppler["f_max_hz"]), rng)
    return _fan_gain(
        n_samples,
        fs,
        float(tap.doppler["rot_hz"]),
        int(tap.doppler["blades"]),
        float(tap.doppler.get("f_max_hz", 0.0)),
        float(tap.doppler.get("duty", 0.5)),
        rng,
    )


def apply_tdl(signal: IqSignal, channel: TdlChannel, rng: Rng) -> IqSignal:
    """Sum of delayed, gain-weighted copies; unit average channel power."""
    fs = signal.sample_rate_hz
    max_delay = channel.taps[-1].delay_s
    if max_delay >= signal.duration_s / 10.0:
        raise ValueError("max tap delay must be below a tenth of the signal duration")
    powers = channel.normalized_powers()
    out = np.zeros(len(signal.samples), dtype=complex)
    for i, (tap, p) in enumerate(zip(channel.taps, powers)):
        delay_samples = tap.delay_s * fs
        n_int = math.floor(delay_samples)
        frac = delay_samples - n_int
        x = signal.samples
        if frac > 1e-9:
            taps = fractional_delay_taps(frac)
            x = sig.fftconvolve(x, taps, mode="full")
            x = x[(len(taps) - 1) // 2 :][: len(signal.samples)]
        delayed = np.zeros(len(signal.samples), dtype=complex)
        if n_int < len(signal.samples):
            delayed[n_int:] = x[: len(signal.samples) - n_int]
        gain = _tap_gain(tap, len(signal.samples), fs, rng.derive("tap", i))
        out += math.sqrt(p) * gain * delayed
    return signal.with_samples(out)


def fan_doppler(
    signal: IqSignal,
    rot_hz: float,
    blades: int,
    f_max_hz: float,
    duty: float,
    rng: Rng,
) -> IqSignal:
    """Rotating-fan time-selective channel (flat): LOS plus gated blade path."""
    gain = _fan_gain(
        len(signal.samples), signal.sample_rate_hz, rot_hz, blades, f_max_hz, duty, rng
    )
    return signal.with_samples(signal.samples * gain)


def coherence_metrics(channel: TdlChannel) -> dict:
    """Rule-of-thumb coherence: bw = 1/(5*tau_rms), time = 0.423/f_max.

    Infinite values flag flat (tau_rms = 0) or static (f_max = 0) channels.
    """
    tau = channel.rms_delay_spread_s
    f_max = channel.max_doppler_hz
    return {
        "coherence_bw_hz": math.inf if tau == 0 else 1.0 / (5.0 * tau),
        "coherence_time_s": math.inf if f_max == 0 else 0.423 / f_max,
    }


# Presets ----------------------------------------------------------------------


def channel_preset(name: str) -> TdlChannel:
    """Named propagation profiles used by configs and the CLI."""
    if name == "flat":
        return TdlChannel((TdlTap(0.0, 0.0),))
    if name == "two-ray":
        return TdlChannel((TdlTap(0.0, 0.0), TdlTap(1e-6, 0.0)))
    if name in ("exp-pdp-short", "exp-pdp-long"):
        spacing = 0.5e-6 if name == "exp-pdp-short" else 2e-6
        delays = np.arange(6) * spacing
        powers_db = -3.0 * np.arange(6)  # exponential profile, 3 dB per tap
        return TdlChannel(tuple(TdlTap(float(d), float(p)) for d, p in zip(delays, powers_db)))
    if name in ("fan-slow", "fan-fast"):
        rot = 2.0 if name == "fan-slow" else 10.0
        dopp = {"kind": "fan", "rot_hz": rot, "blades": 3, "f_max_hz": 40.0, "duty": 0.35}
        return TdlChannel((TdlTap(0.0, 0.0, dopp),))
    if name == "doubly-dispersive":
        dopp = {"kind": "fan", "rot_hz": 10.0, "blades": 3, "f_max_hz": 40.0, "duty": 0.35}
        return TdlChannel(
            (TdlTap(0.0, 0.0, dopp), TdlTap(1e-6, -3.0), TdlTap(2.5e-6, -6.0))
        )
    raise ValueError(f"unknown channel preset {name!r}")
