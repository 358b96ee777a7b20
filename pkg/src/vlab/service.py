"""Live virtual-instrument session service.

Holds per-session transmitter/impairment/channel state, regenerates the
signal on every accepted mutation (revision bump), and serves analysis
frames over HTTP and a WebSocket stream. Updates are atomic: every frame is
computed from one immutable spec snapshot and carries the revision (plus an
echo of that snapshot) it was computed from. Frame computation is a pure
function of (spec, seed, revision), so replaying a session's mutation log
reproduces bit-identical frames.
"""

from __future__ import annotations

import asyncio
import copy
import json
import os
import threading
import time
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware

from .analysis import evm_rms, eye_diagram, measure_ber, papr_ccdf, welch_psd
from .channel import TdlChannel, apply_tdl, channel_preset
from .core import Rng
from .impairments import ImpairmentChain
from .modem import Scheme, demap_symbols, map_bits
from .shaping import PulseShape, group_delay_samples, matched_filter, pulse_shape
from .trainer import (
    ChallengeKind,
    ChallengeScenario,
    Difficulty,
    _GENERATORS,
    grade_submission,
)

DEFAULT_SPEC = {
    "seed": 0,
    "scheme": "qpsk",
    "shape": {"kind": "rrc", "rolloff": 0.35, "bt": 0.3, "span": 16, "sps": 8},
    "symbol_rate_hz": 125_000.0,
    "n_symbols": 4096,
    "chain": [{"stage": "awgn", "snr_db": 30.0}],
    "channel": "flat",
    "analysis": {
        "psd_segment_len": 512,
        "constellation_points": 512,
        "eye_traces": 48,
        "ccdf_max_db": 12.0,
    },
}


class SpecError(ValueError):
    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path
        self.message = message


def _merge(base: dict, patch: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in patch.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate_spec(spec: dict) -> None:
    """Raise SpecError (with a field path) on the first invalid entry."""
    try:
        Scheme(spec["scheme"])
    except (KeyError, ValueError):
        raise SpecError("scheme", f"unknown scheme {spec.get('scheme')!r}")
    try:
        PulseShape.from_config(spec["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError("shape", str(exc))
    if not (isinstance(spec.get("symbol_rate_hz"), (int, float)) and spec["symbol_rate_hz"] > 0):
        raise SpecError("symbol_rate_hz", "must be a positive number")
    n = spec.get("n_symbols")
    if not (isinstance(n, int) and 64 <= n <= 200_000):
        raise SpecError("n_symbols", "must be an integer in [64, 200000]")
    try:
        ImpairmentChain(tuple(spec.get("chain", ())))
    except (TypeError, ValueError) as exc:
        raise SpecError("chain", str(exc))
    channel = spec.get("channel")
    if isinstance(channel, str):
        try:
            channel_preset(channel)
        except ValueError as exc:
            raise SpecError("channel", str(exc))
    elif isinstance(channel, dict):
        try:
            TdlChannel.from_json(json.dumps(channel))
        except (KeyError, TypeError, ValueError) as exc:
            raise SpecError("channel", str(exc))
    elif channel is not None:
        raise SpecError("channel", "must be a preset name or a taps object")
    if Scheme(spec["scheme"]).is_offset and spec["shape"].get("sps", 8) % 2:
        raise SpecError("shape.sps", "offset schemes need an even sps")


def compute_frame(spec: dict, revision: int) -> dict:
    """Synthesize the signal for one spec snapshot and compute every view."""
    rng = Rng(int(spec.get("seed", 0))).derive("frame", revision)
    scheme = Scheme(spec["scheme"])
    shape = PulseShape.from_config(spec["shape"])
    n_symbols = int(spec["n_symbols"])
    bits = rng.derive("bits").bits(n_symbols * scheme.bits_per_symbol)
    stream = map_bits(bits, scheme)
    tx = pulse_shape(stream, shape, float(spec["symbol_rate_hz"]))

    chain = ImpairmentChain(tuple(spec.get("chain", ())))
    rx = chain.apply(tx, rng.derive("chain"))
    channel = spec.get("channel")
    if channel and channel != "flat":
        tdl = channel_preset(channel) if isinstance(channel, str) else \
            TdlChannel.from_json(json.dumps(channel))
        rx = apply_tdl(rx, tdl, rng.derive("channel"))

    acfg = spec.get("analysis", DEFAULT_SPEC["analysis"])
    seg = min(int(acfg.get("psd_segment_len", 512)), len(rx.samples))
    psd = welch_psd(rx, segment_len=seg, overlap_frac=0.5, window="hann")

    filtered = matched_filter(rx, shape)
    sps = shape.samples_per_symbol
    idx = 2 * group_delay_samples(shape) + sps * np.arange(n_symbols)
    idx = idx[idx < len(filtered.samples)]
    rx_symbols = filtered.samples[idx]
    ref = stream.symbols[: len(rx_symbols)]
    # Least-squares complex gain referenced to the known transmit symbols.
    gain = np.sum(np.conj(ref) * rx_symbols) / np.sum(np.abs(ref) ** 2)
    if abs(gain) < 1e-12:
        gain = 1.0 + 0j
    eq = rx_symbols / gain
    evm = evm_rms(eq, ref)
    rx_bits = demap_symbols(eq, scheme)[: len(bits)]
    _, ber = measure_ber(bits[: len(rx_bits)], rx_bits)

    n_pts = int(acfg.get("constellation_points", 512))
    thresholds = np.arange(0.0, float(acfg.get("ccdf_max_db", 12.0)) + 1e-9, 0.25)
    ccdf = papr_ccdf(rx, thresholds)
    eye = eye_diagram(filtered, sps, offset=2 * group_delay_samples(shape), rail="i")
    n_traces = int(acfg.get("eye_traces", 48))

    return {
        "revision": revision,
        "timestamp": time.time(),
        "spec_echo": copy.deepcopy(spec),
        "psd": {
            "freq_bins_hz": psd.freq_bins_hz.tolist(),
            "power_db": psd.power_db.tolist(),
            "resolution_bw_hz": psd.resolution_bw_hz,
        },
        "constellation": np.stack(
            [eq[:n_pts].real, eq[:n_pts].imag], axis=1).tolist(),
        "eye": {
            "traces": eye.traces[:n_traces].tolist(),
            "samples_per_symbol": sps,
            "rail": "i",
        },
        "ccdf": {
            "threshold_db": ccdf.threshold_db.tolist(),
            "prob_exceed": ccdf.prob_exceed.tolist(),
        },
        "scalars": {
            "evm_pct": float(evm),
            "papr_db": float(ccdf.papr_at(1e-3)),
            "est_ber": float(ber),
        },
    }


def export_iq_bytes(spec: dict, revision: int) -> tuple[bytes, dict]:
    """The signal buffer behind the current frame, in the IQ file format."""
    rng = Rng(int(spec.get("seed", 0))).derive("frame", revision)
    scheme = Scheme(spec["scheme"])
    shape = PulseShape.from_config(spec["shape"])
    bits = rng.derive("bits").bits(int(spec["n_symbols"]) * scheme.bits_per_symbol)
    tx = pulse_shape(map_bits(bits, scheme), shape, float(spec["symbol_rate_hz"]))
    chain = ImpairmentChain(tuple(spec.get("chain", ())))
    rx = chain.apply(tx, rng.derive("chain"))
    channel = spec.get("channel")
    if channel and channel != "flat":
        tdl = channel_preset(channel) if isinstance(channel, str) else \
            TdlChannel.from_json(json.dumps(channel))
        rx = apply_tdl(rx, tdl, rng.derive("channel"))
    interleaved = np.empty(2 * len(rx.samples), dtype="<f4")
    interleaved[0::2] = rx.samples.real
    interleaved[1::2] = rx.samples.imag
    meta = {
        "sample_rate_hz": rx.sample_rate_hz,
        "center_freq_hz": rx.center_freq_hz,
        "label": f"session r{revision}",
        "seed": int(spec.get("seed", 0)),
    }
    return interleaved.tobytes(), meta


@dataclass
class LabSession:
    session_id: str
    spec: dict
    revision: int = 1
    log: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    frames: dict = field(default_factory=dict)  # revision -> cached frame
    challenge: dict | None = None

    def snapshot(self) -> tuple[dict, int]:
        with self.lock:
            return copy.deepcopy(self.spec), self.revision

    def frame(self) -> dict:
        spec, rev = self.snapshot()
        cached = self.frames.get(rev)
        if cached is None:
            cached = compute_frame(spec, rev)
            self.frames[rev] = cached
            # Bound the cache; streams only ever need recent revisions.
            for old in [r for r in self.frames if r < rev - 8]:
                self.frames.pop(old, None)
        return cached

    def update(self, patch: dict) -> int:
        with self.lock:
            merged = _merge(self.spec, patch)
            validate_spec(merged)
            self.spec = merged
            self.revision += 1
            self.log.append({"revision": self.revision, "patch": copy.deepcopy(patch)})
            return self.revision


class SessionRegistry:
    def __init__(self):
        self._sessions: dict[str, LabSession] = {}
        self._lock = threading.Lock()

    def create(self, spec: dict) -> LabSession:
        merged = _merge(DEFAULT_SPEC, spec or {})
        validate_spec(merged)
        session = LabSession(session_id=uuid.uuid4().hex[:12], spec=merged)
        session.log.append({"revision": 1, "initial_spec": copy.deepcopy(merged)})
        with self._lock:
            self._sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> LabSession:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return session

    def snapshot_all(self) -> dict:
        with self._lock:
            return {
                sid: {"spec": s.spec, "revision": s.revision, "log": s.log}
                for sid, s in self._sessions.items()
            }


registry = SessionRegistry()


@asynccontextmanager
async def _lifespan(_: FastAPI):
    yield
    target = os.environ.get("VLAB_SNAPSHOT_PATH")
    if target:
        Path(target).write_text(json.dumps(registry.snapshot_all(), indent=2))


app = FastAPI(title="vlab service", lifespan=_lifespan)
# The browser front panel is served from a different origin; the lab-trust
# model has no authentication, so the API is open to any origin.
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.post("/sessions")
def create_session(spec: dict | None = None):
    try:
        session = registry.create(spec or {})
    except SpecError as exc:
        raise HTTPException(status_code=422,
                            detail={"field": exc.field_path, "message": exc.message})
    return {"session_id": session.session_id, "revision": session.revision}


@app.patch("/sessions/{session_id}")
def update_session(session_id: str, patch: dict):
    session = registry.get(session_id)
    try:
        revision = session.update(patch)
    except SpecError as exc:
        raise HTTPException(status_code=422,
                            detail={"field": exc.field_path, "message": exc.message})
    return {"revision": revision}


@app.get("/sessions/{session_id}/frame")
def get_frame(session_id: str):
    return registry.get(session_id).frame()


@app.get("/sessions/{session_id}/log")
def get_log(session_id: str):
    session = registry.get(session_id)
    with session.lock:
        return {"session_id": session_id, "log": copy.deepcopy(session.log)}


@app.get("/sessions/{session_id}/iq")
def get_iq(session_id: str):
    session = registry.get(session_id)
    spec, rev = session.snapshot()
    payload, meta = export_iq_bytes(spec, rev)
    headers = {
        "X-Sample-Rate-Hz": str(meta["sample_rate_hz"]),
        "X-Center-Freq-Hz": str(meta["center_freq_hz"]),
        "X-Revision": str(rev),
    }
    return Response(content=payload, media_type="application/octet-stream", headers=headers)


@app.get("/sessions/{session_id}/iq/meta")
def get_iq_meta(session_id: str):
    session = registry.get(session_id)
    spec, rev = session.snapshot()
    _, meta = export_iq_bytes(spec, rev)
    return meta


@app.post("/sessions/{session_id}/challenge")
def attach_challenge(session_id: str, body: dict):
    session = registry.get(session_id)
    try:
        scenario = ChallengeScenario(
            kind=ChallengeKind(body["kind"]),
            difficulty=Difficulty(body.get("difficulty", "easy")),
            trainee_id=body.get("trainee_id", session_id),
            seed=int(body.get("seed", 0)),
        )
        sig, params, truth = _GENERATORS[scenario.kind](scenario)
    except (KeyError, ValueError) as exc:
        raise HTTPException(status_code=422, detail={"field": "challenge", "message": str(exc)})
    visible = scenario.to_dict(params)
    with session.lock:
        session.challenge = {"visible": visible, "truth": truth}
    return visible


@app.post("/sessions/{session_id}/challenge/answer")
def answer_challenge(session_id: str, submission: dict):
    session = registry.get(session_id)
    with session.lock:
        challenge = session.challenge
    if challenge is None:
        raise HTTPException(status_code=404, detail="no challenge attached")
    report = grade_submission(challenge["visible"], challenge["truth"], submission)
    return report.to_dict()


@app.websocket("/sessions/{session_id}/stream")
async def stream_frames(ws: WebSocket, session_id: str):
    """Ordered frame stream; accepts {"type": "update", "spec": {...}} inbound.

    Frames are throttled to <= 10/s and delivered in revision order; a burst
    of mutations may skip intermediate revisions but never reorders.
    """
    try:
        session = registry.get(session_id)
    except HTTPException:
        await ws.close(code=4404)
        return
    await ws.accept()
    last_sent = 0
    try:
        while True:
            _, revision = session.snapshot()
            if revision > last_sent:
                frame = await asyncio.to_thread(session.frame)
                if frame["revision"] > last_sent:
                    await ws.send_json(frame)
                    last_sent = frame["revision"]
            try:
                message = await asyncio.wait_for(ws.receive_json(), timeout=0.1)
            except asyncio.TimeoutError:
                continue
            if message.get("type") == "update":
                try:
                    new_rev = session.update(message.get("spec", {}))
                    await ws.send_json({"type": "ack", "revision": new_rev})
                except SpecError as exc:
                    await ws.send_json({
                        "type": "error", "field": exc.field_path, "message": exc.message,
                    })
    except (WebSocketDisconnect, RuntimeError):
        return


