"""Gamified micro-task engine: seeded per-trainee challenges with sealed
ground truth, deterministic grading, reference solvers, and the per-module
demo runner behind the batch CLI.

Truth sealing is by file separation: the trainee-visible artifacts are the
IQ capture, its sidecar, and a scenario file with solving hints; the truth
record goes to a separate instructor-only file and is never serialized into
the visible set.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import channel as chan, impairments as imp, multiaccess as ma, ofdm as ofdm_mod
from .analysis import evm_rms, measure_ber, papr_ccdf, welch_psd
from .core import IqSignal, Rng, save_iq
from .modem import Scheme, SymbolStream, classify_modulation, demap_symbols, map_bits
from .rxchain import FrameSpec, build_frame, coarse_sync, estimate_cfo, run_receiver, text_to_bits
from .shaping import (
    PulseKind,
    PulseShape,
    estimate_filter_params,
    group_delay_samples,
    matched_filter,
    pulse_shape,
)


class ChallengeKind(str, enum.Enum):
    HIDDEN_MESSAGE = "hidden-message"
    BLIND_MODULATION = "blind-modulation"
    FILTER_PARAMS = "filter-params"
    SLOT_LOCATION = "slot-location"
    HOP_PATTERN = "hop-pattern"
    CFO_HUNT = "cfo-hunt"


class Difficulty(str, enum.Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


# Impairment severities per difficulty. cfo_frac is the injected CFO as a
# fraction of the relevant estimator's unambiguous range.
PRESETS = {
    Difficulty.EASY: {"snr_db": 20.0, "cfo_frac": 0.0, "iq_imbalance_db": 0.0,
                      "phase_noise_hz": 0.0, "quantizer_bits": None},
    Difficulty.MEDIUM: {"snr_db": 10.0, "cfo_frac": 0.25, "iq_imbalance_db": 0.5,
                        "phase_noise_hz": 0.0, "quantizer_bits": None},
    Difficulty.HARD: {"snr_db": 5.0, "cfo_frac": 0.45, "iq_imbalance_db": 0.5,
                      "phase_noise_hz": 20.0, "quantizer_bits": 6},
}

_WORDS = (
    "ANTENNA BASEBAND CARRIER DOPPLER ENVELOPE FILTER GAIN HARMONIC IMPULSE "
    "JITTER KEYING LOBE MIXER NYQUIST OFFSET PREAMBLE QUANTIZER ROLLOFF "
    "SPECTRUM TIMING UPLINK VECTOR WAVEFORM XTALK YIELD ZENITH"
).split()


@dataclass(frozen=True)
class ChallengeScenario:
    kind: ChallengeKind
    difficulty: Difficulty
    trainee_id: str
    seed: int

    def rng(self, *tokens: object) -> Rng:
        return Rng(self.seed).derive(self.trainee_id, self.kind.value,
                                     self.difficulty.value, *tokens)

    def to_dict(self, params: dict) -> dict:
        return {
            "kind": self.kind.value,
            "difficulty": self.difficulty.value,
            "trainee_id": self.trainee_id,
            "seed": self.seed,
            "params": params,
        }

    @staticmethod
    def from_dict(obj: dict) -> "ChallengeScenario":
        return ChallengeScenario(
            kind=ChallengeKind(obj["kind"]),
            difficulty=Difficulty(obj["difficulty"]),
            trainee_id=obj["trainee_id"],
            seed=int(obj["seed"]),
        )


@dataclass
class GradeReport:
    score: float
    breakdown: dict
    feedback: str

    def to_dict(self) -> dict:
        return {"score": self.score, "breakdown": self.breakdown, "feedback": self.feedback}


_FS = 1_000_000.0  # emulation sample rate for challenge captures
_SPS = 8


def _default_frame_spec() -> FrameSpec:
    return FrameSpec(
        preamble_degree=6, preamble_repeats=2,
        payload_scheme=Scheme.BPSK, payload_n_bits=0,
        shape=PulseShape(PulseKind.RRC, rolloff=0.35, span_symbols=16,
                         samples_per_symbol=_SPS),
    )


def _cfo_ambiguity_hz(spec: FrameSpec) -> float:
    return _FS / (2.0 * spec.seq_len_samples)


def _message_for(scenario: ChallengeScenario) -> str:
    rng = scenario.rng("message")
    words = [str(_WORDS[int(rng.integers(0, len(_WORDS)))]) for _ in range(4)]
    tag = int(rng.integers(0, 10_000))
    return f"{' '.join(words)} #{tag:04d}"


def _standard_impairments(
    signal: IqSignal, scenario: ChallengeScenario, cfo_range_hz: float,
    apply_cfo_stage: bool = True, override: dict | None = None,
) -> tuple[IqSignal, dict]:
    """Apply the difficulty preset; returns the impaired signal and the draws."""
    p = {**PRESETS[scenario.difficulty], **(override or {})}
    rng = scenario.rng("impairments")
    draws = {}
    out = signal
    if apply_cfo_stage and p["cfo_frac"] > 0:
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        cfo = sign * p["cfo_frac"] * cfo_range_hz * float(rng.uniform(0.8, 1.0))
        out = imp.apply_cfo(out, cfo, float(rng.uniform(0, 2 * math.pi)))
        draws["cfo_hz"] = cfo
    if p["phase_noise_hz"] > 0:
        out = imp.apply_phase_noise(out, p["phase_noise_hz"], rng.derive("pn"))
        draws["phase_noise_hz"] = p["phase_noise_hz"]
    if p["iq_imbalance_db"] > 0:
        out = imp.apply_iq_impairments(out, gain_imbalance_db=p["iq_imbalance_db"])
        draws["iq_imbalance_db"] = p["iq_imbalance_db"]
    gain = float(rng.uniform(0.4, 1.0))
    phase = float(rng.uniform(0, 2 * math.pi))
    out = out.with_samples(out.samples * gain * np.exp(1j * phase))
    draws["channel_gain"] = gain
    if p["quantizer_bits"]:
        peak = float(np.max(np.abs(out.samples.view(np.float64)))) or 1.0
        out = imp.quantize(out, p["quantizer_bits"], 1.2 * peak)
        draws["quantizer_bits"] = p["quantizer_bits"]
    out = imp.add_awgn(out, p["snr_db"], rng.derive("awgn"))
    draws["snr_db"] = p["snr_db"]
    return out, draws


# Generation -----------------------------------------------------------------


def _gen_hidden_message(scenario: ChallengeScenario):
    message = _message_for(scenario)
    bits = text_to_bits(message)
    spec = FrameSpec(
        preamble_degree=6, preamble_repeats=2, payload_scheme=Scheme.BPSK,
        payload_n_bits=len(bits),
        shape=PulseShape(PulseKind.RRC, rolloff=0.35, span_symbols=16,
                         samples_per_symbol=_SPS),
    )
    frame = build_frame(bits, spec, symbol_rate_hz=_FS / _SPS)
    pad = int(scenario.rng("pad").integers(200, 1200))
    samples = np.concatenate([
        np.zeros(pad, dtype=complex), frame.samples, np.zeros(400, dtype=complex),
    ])
    sig = IqSignal(samples=samples, sample_rate_hz=_FS, label="hidden-message")
    sig, draws = _standard_impairments(sig, scenario, _cfo_ambiguity_hz(spec))
    params = {"frame_spec": json.loads(spec.to_json()), "sample_rate_hz": _FS}
    truth = {"message": message, "frame_start": pad, **draws}
    return sig, params, truth


_BLIND_CANDIDATES = {
    Difficulty.EASY: ["bpsk", "qpsk", "psk8", "qam16"],
    Difficulty.MEDIUM: ["bpsk", "pi2-bpsk", "qpsk", "psk8", "qam16"],
    Difficulty.HARD: ["bpsk", "pi2-bpsk", "qpsk", "qam16"],
}


def _gen_blind_modulation(scenario: ChallengeScenario):
    candidates = _BLIND_CANDIDATES[scenario.difficulty]
    rng = scenario.rng("scheme")
    scheme = Scheme(candidates[int(rng.integers(0, len(candidates)))])
    n_symbols = 4096
    bits = scenario.rng("bits").bits(n_symbols * scheme.bits_per_symbol)
    shape = PulseShape(PulseKind.RRC, rolloff=0.35, span_symbols=16,
                       samples_per_symbol=_SPS)
    wave = pulse_shape(map_bits(bits, scheme), shape, symbol_rate_hz=_FS / _SPS)
    # CFO range for a synchronized symbol stream: a fraction of half the
    # symbol-rate increment ambiguity.
    cfo_range = _FS / _SPS / 16.0
    sig, draws = _standard_impairments(wave, scenario, cfo_range)
    params = {
        "candidates": candidates,
        "sps": _SPS,
        "shape": shape.to_config(),
        "n_symbols": n_symbols,
        "sample_rate_hz": _FS,
    }
    truth = {"scheme": scheme.value, **draws}
    return sig, params, truth


def _gen_filter_params(scenario: ChallengeScenario):
    rng = scenario.rng("shape")
    kind = (PulseKind.RC, PulseKind.RRC, PulseKind.GAUSSIAN)[int(rng.integers(0, 3))]
    if kind == PulseKind.GAUSSIAN:
        value = round(float(rng.uniform(0.3, 0.7)), 2)
        shape = PulseShape(kind, bt=value, span_symbols=16, samples_per_symbol=_SPS)
    else:
        value = round(float(rng.uniform(0.15, 0.95)), 2)
        shape = PulseShape(kind, rolloff=value, span_symbols=16, samples_per_symbol=_SPS)
    n_symbols = 4096
    bits = scenario.rng("bits").bits(2 * n_symbols)
    wave = pulse_shape(map_bits(bits, Scheme.QPSK), shape, symbol_rate_hz=_FS / _SPS)
    sig, draws = _standard_impairments(wave, scenario, 0.0, apply_cfo_stage=False)
    params = {"sps": _SPS, "symbol_rate_hz": _FS / _SPS, "sample_rate_hz": _FS,
              "kinds": ["rc", "rrc", "gaussian"]}
    truth = {"kind": kind.value, "value": value, **draws}
    return sig, params, truth


def _gen_slot_location(scenario: ChallengeScenario):
    n_slots, slot_len, guard = 8, 64, 8
    rng = scenario.rng("frame")
    powers = -1.0 * np.arange(n_slots)
    rng.shuffle(powers)
    shape = PulseShape(PulseKind.RRC, rolloff=0.35, span_symbols=16,
                       samples_per_symbol=_SPS)
    slots = tuple(
        ma.TdmaSlot(user_id=f"u{k}", relative_power_db=float(powers[k]),
                    payload_bits=scenario.rng("payload", k).bits(slot_len))
        for k in range(n_slots)
    )
    frame = ma.TdmaFrame(slot_len_symbols=slot_len, slots=slots, guard_symbols=guard)
    sig, bounds = ma.tdma_compose(frame, Scheme.BPSK, shape, rng.derive("pad"),
                                  symbol_rate_hz=_FS / _SPS)
    pad = int(scenario.rng("offset").integers(100, 900))
    samples = np.concatenate([np.zeros(pad, dtype=complex), sig.samples])
    sig = IqSignal(samples=samples, sample_rate_hz=_FS, label="slot-location")
    sig, draws = _standard_impairments(sig, scenario, 0.0, apply_cfo_stage=False)
    target = int(scenario.rng("target").integers(0, n_slots))
    params = {"n_slots": n_slots, "slot_len_symbols": slot_len,
              "guard_symbols": guard, "sps": _SPS, "slot_index": target,
              "sample_rate_hz": _FS}
    truth = {"start": bounds[target]["start"] + pad,
             "stop": bounds[target]["stop"] + pad,
             "slot_index": target, **draws}
    return sig, params, truth


def _gen_hop_pattern(scenario: ChallengeScenario):
    rng = scenario.rng("patterns")
    freq_set = np.array([-300e3, -180e3, -60e3, 60e3, 180e3, 300e3])
    n_candidates, n_hops = 4, 8
    patterns = []
    for _ in range(n_candidates):
        idx = rng.integers(0, len(freq_set), n_hops)
        patterns.append([float(freq_set[i]) for i in idx])
    target = int(scenario.rng("target").integers(0, n_candidates))
    other = int(scenario.rng("other").integers(0, n_candidates - 1))
    other = other + 1 if other >= target else other

    hop_len = 4096
    shape = PulseShape(PulseKind.RRC, rolloff=0.35, span_symbols=16,
                       samples_per_symbol=_SPS)
    n_symbols = n_hops * hop_len // _SPS
    base = []
    for u, (pattern, power_db) in enumerate([(patterns[target], 0.0),
                                             (patterns[other], -10.0)]):
        bits = scenario.rng("bits", u).bits(2 * n_symbols)
        wave = pulse_shape(map_bits(bits, Scheme.QPSK), shape, symbol_rate_hz=_FS / _SPS)
        hopped = ma.fhss_apply(
            IqSignal(wave.samples[: n_hops * hop_len], _FS), pattern, hop_len
        )
        base.append(hopped.samples * 10.0 ** (power_db / 20.0))
    sig = IqSignal(samples=base[0] + base[1], sample_rate_hz=_FS, label="fhss")
    sig, draws = _standard_impairments(sig, scenario, 0.0, apply_cfo_stage=False)
    params = {"candidates": patterns, "hop_len_samples": hop_len,
              "sample_rate_hz": _FS, "fft_len": 256}
    truth = {"pattern_id": target, "weak_pattern_id": other, **draws}
    return sig, params, truth


def _gen_cfo_hunt(scenario: ChallengeScenario):
    spec = _default_frame_spec()
    payload_bits = scenario.rng("payload").bits(256)
    # Four preamble repeats: three independent pair correlations keep the
    # estimate inside the 2%-of-range grading tolerance at the hard tier.
    spec = FrameSpec(
        preamble_degree=spec.preamble_degree, preamble_repeats=4,
        payload_scheme=Scheme.BPSK, payload_n_bits=len(payload_bits),
        shape=spec.shape,
    )
    frame = build_frame(payload_bits, spec, symbol_rate_hz=_FS / _SPS)
    amb = _cfo_ambiguity_hz(spec)
    rng = scenario.rng("cfo")
    frac = {"easy": 0.2, "medium": 0.3, "hard": 0.45}[scenario.difficulty.value]
    sign = 1.0 if rng.uniform() < 0.5 else -1.0
    cfo = sign * frac * amb * float(rng.uniform(0.5, 1.0))
    sig = imp.apply_cfo(frame, cfo, float(rng.uniform(0, 2 * math.pi)))
    # A Wiener phase walk randomizes the very quantity being hunted; the CFO
    # game keeps the other hard-tier impairments but not phase noise.
    sig, draws = _standard_impairments(sig, scenario, 0.0, apply_cfo_stage=False,
                                       override={"phase_noise_hz": 0.0})
    params = {"frame_spec": json.loads(spec.to_json()), "sample_rate_hz": _FS,
              "ambiguity_hz": amb}
    truth = {"cfo_hz": cfo, "ambiguity_hz": amb, **draws}
    return sig, params, truth


_GENERATORS = {
    ChallengeKind.HIDDEN_MESSAGE: _gen_hidden_message,
    ChallengeKind.BLIND_MODULATION: _gen_blind_modulation,
    ChallengeKind.FILTER_PARAMS: _gen_filter_params,
    ChallengeKind.SLOT_LOCATION: _gen_slot_location,
    ChallengeKind.HOP_PATTERN: _gen_hop_pattern,
    ChallengeKind.CFO_HUNT: _gen_cfo_hunt,
}


def generate_challenge(
    scenario: ChallengeScenario, out_dir: str | Path
) -> tuple[dict, dict]:
    """Synthesize the challenge capture and write the artifact set.

    Writes <stem>.iq (+ sidecar), <stem>.scenario.json (trainee-visible) and
    <stem>.truth.json (instructor-only). Returns (visible scenario dict,
    truth dict).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sig, params, truth = _GENERATORS[scenario.kind](scenario)
    stem = f"{scenario.kind.value}_{scenario.trainee_id}_{scenario.seed}"
    save_iq(sig, out_dir / f"{stem}.iq", seed=scenario.seed)
    visible = scenario.to_dict(params)
    (out_dir / f"{stem}.scenario.json").write_text(json.dumps(visible, indent=2))
    (out_dir / f"{stem}.truth.json").write_text(json.dumps(truth, indent=2))
    return visible, truth


# Grading ---------------------------------------------------------------------


def grade_submission(scenario_dict: dict, truth: dict, submission: dict) -> GradeReport:
    """Deterministic per-kind grading (see each branch for the rule)."""
    kind = ChallengeKind(scenario_dict["kind"])
    if kind == ChallengeKind.HIDDEN_MESSAGE:
        claimed = str(submission.get("message", ""))
        actual = truth["message"]
        n = max(len(actual), 1)
        correct = sum(1 for a, b in zip(claimed, actual) if a == b)
        score = correct / n
        return GradeReport(score, {"chars_correct": correct, "chars_total": n},
                           "character accuracy against the transmitted message")
    if kind == ChallengeKind.BLIND_MODULATION:
        ok = str(submission.get("scheme", "")).lower() == truth["scheme"]
        return GradeReport(float(ok), {"expected_one_of": scenario_dict["params"]["candidates"]},
                           "exact scheme match")
    if kind == ChallengeKind.FILTER_PARAMS:
        err = abs(float(submission.get("value", math.inf)) - truth["value"])
        score = 1.0 if err <= 0.1 else 0.0
        return GradeReport(score, {"abs_error": err, "tolerance": 0.1},
                           "parameter within +/-0.1")
    if kind == ChallengeKind.SLOT_LOCATION:
        a0, a1 = float(submission.get("start", 0)), float(submission.get("stop", 0))
        t0, t1 = truth["start"], truth["stop"]
        inter = max(0.0, min(a1, t1) - max(a0, t0))
        union = max(a1, t1) - min(a0, t0)
        score = inter / union if union > 0 else 0.0
        return GradeReport(score, {"claimed": [a0, a1], "overlap": inter},
                           "overlap ratio of claimed vs true slot")
    if kind == ChallengeKind.HOP_PATTERN:
        ok = int(submission.get("pattern_id", -1)) == truth["pattern_id"]
        return GradeReport(float(ok), {}, "exact pattern match")
    if kind == ChallengeKind.CFO_HUNT:
        err = abs(float(submission.get("cfo_hz", math.inf)) - truth["cfo_hz"])
        tol = 0.02 * truth["ambiguity_hz"]
        return GradeReport(1.0 if err <= tol else 0.0,
                           {"abs_error_hz": err, "tolerance_hz": tol},
                           "CFO within 2% of the unambiguous range")
    raise ValueError(f"kind mismatch: {kind}")


# Reference solvers -------------------------------------------------------------


def solve_challenge(scenario_dict: dict, signal: IqSignal) -> dict:
    """The artifact's own solver for each kind (the solvability oracle)."""
    kind = ChallengeKind(scenario_dict["kind"])
    params = scenario_dict["params"]
    if kind == ChallengeKind.HIDDEN_MESSAGE:
        spec = FrameSpec.from_json(json.dumps(params["frame_spec"]))
        report = run_receiver(signal, spec)
        return {"message": report.message_text}
    if kind == ChallengeKind.BLIND_MODULATION:
        shape = PulseShape.from_config(params["shape"])
        filtered = matched_filter(signal, shape)
        sps = params["sps"]
        first = 2 * group_delay_samples(shape)
        idx = first + sps * np.arange(params["n_symbols"])
        idx = idx[idx < len(filtered.samples)]
        symbols = filtered.samples[idx]
        candidates = [Scheme(c) for c in params["candidates"]]
        ranking = classify_modulation(symbols, candidates)
        return {"scheme": ranking[0][0].value}
    if kind == ChallengeKind.FILTER_PARAMS:
        kind_hat, value = estimate_filter_params(signal, params["symbol_rate_hz"])
        return {"kind": kind_hat.value, "value": value}
    if kind == ChallengeKind.SLOT_LOCATION:
        sps = params["sps"]
        start, stop = ma.locate_slot(
            signal,
            params["slot_index"],
            params["slot_len_symbols"] * sps,
            params["guard_symbols"] * sps,
            params["n_slots"],
        )
        return {"start": start, "stop": stop}
    if kind == ChallengeKind.HOP_PATTERN:
        pid = ma.identify_hop_pattern(
            signal, params["candidates"], params["hop_len_samples"],
            fft_len=params.get("fft_len", 256),
        )
        return {"pattern_id": pid}
    if kind == ChallengeKind.CFO_HUNT:
        spec = FrameSpec.from_json(json.dumps(params["frame_spec"]))
        sync = coarse_sync(signal, spec.seq_len_samples)
        cfo_hat, _ = estimate_cfo(signal, sync.start_index, spec.seq_len_samples,
                                  repeats=spec.preamble_repeats)
        return {"cfo_hz": cfo_hat}
    raise ValueError(f"unknown kind {kind}")


# Module demos ------------------------------------------------------------------


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def run_module_demo(module_id: int, out_dir: str | Path, seed: int = 0) -> dict:
    """Reproduce one training module's headline observation as data files.

    Returns the summary dict that is also written to summary.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = Rng(seed)
    if module_id == 1:
        summary = _demo_intro(out, rng)
    elif module_id == 2:
        summary = _demo_testbed(out, rng)
    elif module_id == 3:
        summary = _demo_modulation(out, rng)
    elif module_id == 4:
        summary = _demo_shaping(out, rng)
    elif module_id == 5:
        summary = _demo_multiaccess(out, rng)
    elif module_id == 6:
        summary = _demo_impairments(out, rng)
    elif module_id == 7:
        summary = _demo_channel(out, rng)
    elif module_id == 8:
        summary = _demo_receiver(out, rng)
    elif module_id == 9:
        summary = _demo_ofdm(out, rng)
    else:
        raise ValueError("module_id must be 1..9")
    (out / "summary.json").write_text(json.dumps({"module": module_id, **summary}, indent=2))
    return summary


def _qfunc(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _shaped_bpsk(bits, shape, rng):
    return pulse_shape(map_bits(bits, Scheme.BPSK, rng), shape, 1.0)


def _demo_intro(out: Path, rng: Rng) -> dict:
    shape = PulseShape(PulseKind.RRC, rolloff=0.35, span_symbols=16, samples_per_symbol=4)
    rows = []
    for ebn0 in (0, 2, 4, 6, 8):
        bits = rng.derive("bits", ebn0).bits(100_000)
        wave = _shaped_bpsk(bits, shape, rng.derive("pad", ebn0))
        snr = imp.ebn0_to_snr_db(ebn0, 1, shape.samples_per_symbol)
        noisy = imp.add_awgn(wave, snr, rng.derive("noise", ebn0))
        filtered = matched_filter(noisy, shape)
        idx = 2 * group_delay_samples(shape) + shape.samples_per_symbol * np.arange(len(bits))
        decided = (filtered.samples[idx].real < 0).astype(np.int8)
        _, ber = measure_ber(bits, decided)
        rows.append([ebn0, ber, _qfunc(math.sqrt(2.0 * 10 ** (ebn0 / 10.0)))])
    _write_csv(out / "ber_vs_ebn0.csv", ["ebn0_db", "measured_ber", "analytic_ber"], rows)
    return {"observations": {"ber_points": len(rows)}}


def _demo_testbed(out: Path, rng: Rng) -> dict:
    shape = PulseShape(PulseKind.RRC, rolloff=0.35, span_symbols=16, samples_per_symbol=8)
    bits = rng.derive("bits").bits(8192)
    wave = pulse_shape(map_bits(bits, Scheme.QPSK, rng), shape, 125e3)
    psd = welch_psd(wave, 1024, 0.5, "hann")
    _write_csv(out / "psd.csv", ["freq_hz", "power_db"],
               [[f, p] for f, p in zip(psd.freq_bins_hz, psd.power_db)])
    # Emulated FM-band survey: stations at distances via the path-loss model.
    model = chan.PathLossModel(exponent_n=2.8, ref_loss_db_at_d0=40.0, d0_m=10.0,
                               shadowing_sigma_db=4.0)
    stations = []
    for k, (f_mhz, d) in enumerate([(88.1, 12e3), (94.5, 4e3), (101.3, 25e3), (105.7, 8e3)]):
        loss = model.loss_db(d, rng.derive("shadow", k))
        stations.append([f_mhz, d, -loss])
    _write_csv(out / "fm_survey.csv", ["freq_mhz", "distance_m", "rx_power_db"], stations)
    return {"observations": {"n_stations": len(stations)}}


def _demo_modulation(out: Path, rng: Rng) -> dict:
    rows = []
    snr_db = 15.0
    for scheme in (Scheme.BPSK, Scheme.QPSK, Scheme.PSK8, Scheme.QAM16, Scheme.QAM64):
        bits = rng.derive("bits", scheme.value).bits(30_000 * scheme.bits_per_symbol // 10)
        stream = map_bits(bits, scheme, rng.derive("pad", scheme.value))
        noisy = imp.add_awgn(IqSignal(stream.symbols, 1.0), snr_db, rng.derive("n", scheme.value))
        rx_bits = demap_symbols(noisy.samples, scheme)[: len(bits)]
        _, ber = measure_ber(bits, rx_bits)
        evm = evm_rms(noisy.samples, stream.symbols)
        rows.append([scheme.value, snr_db, evm, ber])
    _write_csv(out / "scheme_comparison.csv", ["scheme", "snr_db", "evm_pct", "ber"], rows)
    return {"observations": {"snr_db": snr_db, "schemes": len(rows)}}


def _demo_shaping(out: Path, rng: Rng) -> dict:
    rows = []
    for beta in (0.1, 0.22, 0.35, 0.5, 1.0):
        shape = PulseShape(PulseKind.RRC, rolloff=beta, span_symbols=16, samples_per_symbol=8)
        bits = rng.derive("bits", beta).bits(4000)
        stream = map_bits(bits, Scheme.BPSK, rng.derive("pad", beta))
        wave = pulse_shape(stream, shape, 1.0)
        mf = matched_filter(wave, shape)
        idx = 2 * group_delay_samples(shape) + 8 * np.arange(len(stream.symbols))
        matched_isi = float(np.mean(np.abs(mf.samples[idx] - stream.symbols) ** 2))
        idx_tx = group_delay_samples(shape) + 8 * np.arange(len(stream.symbols))
        unmatched = wave.samples[idx_tx] / math.sqrt(np.mean(np.abs(wave.samples[idx_tx]) ** 2))
        unmatched_isi = float(np.mean(np.abs(unmatched - stream.symbols) ** 2))
        rows.append([beta, 10 * math.log10(matched_isi + 1e-300),
                     10 * math.log10(unmatched_isi + 1e-300)])
    _write_csv(out / "isi_matched_vs_unmatched.csv",
               ["rolloff", "matched_isi_db", "unmatched_isi_db"], rows)
    return {"observations": {"betas": [r[0] for r in rows]}}


def _demo_multiaccess(out: Path, rng: Rng) -> dict:
    thresholds = np.arange(0.0, 12.01, 0.25)
    shape = PulseShape(PulseKind.RRC, rolloff=0.35, span_symbols=16, samples_per_symbol=4)
    rows = []
    codes = ma.walsh_codes(8)
    for n_codes in (1, 2, 4, 8):
        total = None
        for u in range(n_codes):
            bits = rng.derive("bits", n_codes, u).bits(4000)
            syms = map_bits(bits, Scheme.BPSK, rng).symbols
            chips = ma.dsss_spread(syms, codes[u])
            wave = pulse_shape(SymbolStream(symbols=chips, scheme=Scheme.BPSK), shape, 1.0)
            total = wave.samples if total is None else total + wave.samples
        sig = IqSignal(total / math.sqrt(n_codes), 1.0)
        papr = papr_ccdf(sig, thresholds).papr_at(1e-3)
        rows.append([n_codes, papr])
    _write_csv(out / "cdma_papr_vs_codes.csv", ["n_codes", "papr_db_at_1e-3"], rows)
    return {"observations": {"papr_by_codes": {str(r[0]): r[1] for r in rows}}}


def _demo_impairments(out: Path, rng: Rng) -> dict:
    shape = PulseShape(PulseKind.RRC, rolloff=0.35, span_symbols=16, samples_per_symbol=8)
    bits = rng.derive("bits").bits(8000)
    stream = map_bits(bits, Scheme.QPSK, rng)
    wave = pulse_shape(stream, shape, 1.0)
    rows = []
    for bits_q in (2, 4, 6, 8):
        peak = float(np.max(np.abs(wave.samples.view(np.float64))))
        q = imp.quantize(wave, bits_q, 1.1 * peak)
        mf = matched_filter(q, shape)
        idx = 2 * group_delay_samples(shape) + 8 * np.arange(len(stream.symbols))
        syms = mf.samples[idx]
        scale = math.sqrt(np.mean(np.abs(syms) ** 2))
        rows.append([bits_q, evm_rms(syms / scale, stream.symbols)])
    _write_csv(out / "evm_vs_quantizer_bits.csv", ["bits", "evm_pct"], rows)
    return {"observations": {"evm_by_bits": {str(r[0]): r[1] for r in rows}}}


def _demo_channel(out: Path, rng: Rng) -> dict:
    model = chan.PathLossModel(exponent_n=3.2, ref_loss_db_at_d0=40.0, d0_m=1.0,
                               shadowing_sigma_db=6.0)
    meas = []
    for k in range(120):
        d = float(rng.derive("d", k).uniform(1.0, 500.0))
        meas.append((d, model.loss_db(d, rng.derive("s", k))))
    n_hat, ref_hat, sigma_hat = chan.fit_path_loss(meas, d0_m=1.0)
    _write_csv(Path(out) / "path_loss_fit.csv",
               ["n_hat", "ref_hat_db", "sigma_hat_db"], [[n_hat, ref_hat, sigma_hat]])
    metrics = chan.coherence_metrics(chan.channel_preset("two-ray"))
    return {"observations": {"n_hat": n_hat, "sigma_hat_db": sigma_hat,
                             "two_ray_coherence_bw_hz": metrics["coherence_bw_hz"]}}


def _demo_receiver(out: Path, rng: Rng) -> dict:
    message = "RECEIVER DESIGN LAB"
    bits = text_to_bits(message)
    spec = FrameSpec(payload_n_bits=len(bits), payload_scheme=Scheme.BPSK,
                     shape=PulseShape(PulseKind.RRC, rolloff=0.35, span_symbols=16,
                                      samples_per_symbol=8))
    frame = build_frame(bits, spec, symbol_rate_hz=125e3)
    sig = imp.apply_cfo(frame, 80.0, 0.6)
    sig = sig.with_samples(sig.samples * 0.5 * np.exp(1j * 1.1))
    sig = imp.add_awgn(sig, 12.0, rng.derive("noise"))
    report = run_receiver(sig, spec, truth_bits=bits)
    stage_dump = {
        "coarse_offset_samples": report.coarse_offset_samples,
        "cfo_hat_hz": report.cfo_hat_hz,
        "fine_offset_samples": report.fine_offset_samples,
        "channel_gain_abs": abs(report.channel_gain),
        "evm_pct": report.evm_pct,
        "ber": report.ber,
        "message": report.message_text,
    }
    (out / "rx_stages.json").write_text(json.dumps(stage_dump, indent=2))
    return {"observations": stage_dump}


def _demo_ofdm(out: Path, rng: Rng) -> dict:
    rows = []
    for cp in (8, 16, 24, 32):
        cfg = ofdm_mod.OfdmConfig(fft_size=64, cp_len=cp, n_active=32,
                                  scheme=Scheme.QAM16, n_symbols=40)
        bits = rng.derive("bits", cp).bits(cfg.n_data_bits)
        tx = ofdm_mod.ofdm_modulate(bits, cfg, 1e6)
        x = tx.samples
        y = np.concatenate([x, np.zeros(84, dtype=complex)])
        y[20:20 + len(x)] += 10 ** (-3 / 20.0) * x
        sig = IqSignal(y / math.sqrt(1 + 10 ** (-0.3)), 1e6)
        sig = imp.add_awgn(sig, 40.0, rng.derive("noise", cp))
        res = ofdm_mod.ofdm_demodulate(sig, cfg)
        _, ber = measure_ber(bits, res.bits[: len(bits)])
        rows.append([cp, ber])
    _write_csv(out / "ber_vs_cp_len.csv", ["cp_len", "ber"], rows)
    return {"observations": {"ber_by_cp": {str(r[0]): r[1] for r in rows}}}
