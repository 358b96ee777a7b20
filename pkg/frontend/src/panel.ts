// The virtual VSG/VSA front panel: parameter controls on the left, live
// views on the right, challenge workflow at the bottom. All plotted data is
// server-computed; the panel only gates by revision and paints.

import { LabClient, StreamHandle } from "./client.js";
import { PanelState } from "./state.js";
import type { AnalysisFrame, ChallengeScenario, SpecPatch } from "./types.js";
import { renderFrame } from "./views.js";

const SCHEMES = [
  "bpsk", "pi2-bpsk", "qpsk", "oqpsk", "pi4-dqpsk", "psk8", "qam16", "qam64",
];
const CHANNELS = [
  "flat", "two-ray", "exp-pdp-short", "exp-pdp-long", "fan-slow", "fan-fast",
  "doubly-dispersive",
];
const CHALLENGE_KINDS = [
  "hidden-message", "blind-modulation", "filter-params", "slot-location",
  "hop-pattern", "cfo-hunt",
];

interface Controls {
  scheme: HTMLSelectElement;
  rolloff: HTMLInputElement;
  snr: HTMLInputElement;
  cfo: HTMLInputElement;
  iq: HTMLInputElement;
  pa: HTMLInputElement;
  quant: HTMLInputElement;
  channel: HTMLSelectElement;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, attrs: Record<string, string> = {}, text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

function labeled(label: string, input: HTMLElement): HTMLElement {
  const wrap = el("label", { class: "control" });
  wrap.append(el("span", {}, label), input);
  return wrap;
}

export class LabPanel {
  readonly state = new PanelState();
  private stream: StreamHandle | null = null;
  private sessionId = "";
  private controls!: Controls;
  private canvases!: Parameters<typeof renderFrame>[2];
  private readouts!: Record<string, HTMLElement>;
  private challengeUi!: {
    kind: HTMLSelectElement;
    difficulty: HTMLSelectElement;
    seed: HTMLInputElement;
    params: HTMLElement;
    answer: HTMLInputElement;
    grade: HTMLElement;
  };
  private scenario: ChallengeScenario | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: LabClient,
  ) {
    this.build();
  }

  // --- DOM -----------------------------------------------------------------

  private build(): void {
    const layout = el("div", { class: "panel" });

    const left = el("div", { class: "controls" });
    this.controls = {
      scheme: el("select", { id: "ctl-scheme" }),
      rolloff: el("input", { id: "ctl-rolloff", type: "range", min: "0", max: "1", step: "0.05", value: "0.35" }),
      snr: el("input", { id: "ctl-snr", type: "range", min: "-5", max: "40", step: "1", value: "30" }),
      cfo: el("input", { id: "ctl-cfo", type: "number", value: "0", step: "10" }),
      iq: el("input", { id: "ctl-iq", type: "number", value: "0", step: "0.1" }),
      pa: el("input", { id: "ctl-pa", type: "number", value: "40", step: "1" }),
      quant: el("input", { id: "ctl-quant", type: "number", value: "0", step: "1" }),
      channel: el("select", { id: "ctl-channel" }),
    };
    for (const s of SCHEMES) {
      this.controls.scheme.append(el("option", { value: s }, s));
    }
    this.controls.scheme.value = "qpsk";
    for (const c of CHANNELS) {
      this.controls.channel.append(el("option", { value: c }, c));
    }
    left.append(
      labeled("modulation", this.controls.scheme),
      labeled("roll-off", this.controls.rolloff),
      labeled("SNR (dB)", this.controls.snr),
      labeled("CFO (Hz)", this.controls.cfo),
      labeled("IQ imbalance (dB)", this.controls.iq),
      labeled("PA backoff (dB)", this.controls.pa),
      labeled("quantizer bits (0=off)", this.controls.quant),
      labeled("channel", this.controls.channel),
    );

    const right = el("div", { class: "views" });
    const mk = (name: string) => {
      const canvas = el("canvas", { id: `view-${name}`, width: "480", height: "180" });
      const box = el("details", { open: "" });
      box.append(el("summary", {}, name), canvas);
      right.append(box);
      return canvas;
    };
    this.canvases = {
      spectrum: mk("spectrum"),
      waterfall: mk("waterfall"),
      constellation: mk("constellation"),
      eye: mk("eye"),
      ccdf: mk("ccdf"),
    };

    const bar = el("div", { class: "readouts" });
    this.readouts = {
      conn: el("span", { id: "conn-banner", class: "banner" }, "connecting"),
      revision: el("span", { id: "revision-readout" }, "rev -"),
      stale: el("span", { id: "stale-badge", hidden: "" }, "stale"),
      evm: el("span", { id: "evm-readout" }, "EVM: -"),
      papr: el("span", { id: "papr-readout" }, "PAPR: -"),
      ber: el("span", { id: "ber-readout" }, "BER: -"),
    };
    bar.append(...Object.values(this.readouts));

    const challenge = el("div", { class: "challenge" });
    this.challengeUi = {
      kind: el("select", { id: "ch-kind" }),
      difficulty: el("select", { id: "ch-difficulty" }),
      seed: el("input", { id: "ch-seed", type: "number", value: "0" }),
      params: el("pre", { id: "ch-params" }),
      answer: el("input", { id: "ch-answer", type: "text" }),
      grade: el("span", { id: "grade-readout" }, "no grade yet"),
    };
    for (const k of CHALLENGE_KINDS) {
      this.challengeUi.kind.append(el("option", { value: k }, k));
    }
    for (const d of ["easy", "medium", "hard"]) {
      this.challengeUi.difficulty.append(el("option", { value: d }, d));
    }
    const loadBtn = el("button", { id: "ch-load" }, "load challenge");
    const submitBtn = el("button", { id: "ch-submit" }, "submit answer");
    loadBtn.addEventListener("click", () => void this.loadChallenge());
    submitBtn.addEventListener("click", () => void this.submitAnswer());
    challenge.append(
      labeled("kind", this.challengeUi.kind),
      labeled("difficulty", this.challengeUi.difficulty),
      labeled("seed", this.challengeUi.seed),
      loadBtn, this.challengeUi.params,
      labeled("answer", this.challengeUi.answer),
      submitBtn, this.challengeUi.grade,
    );

    layout.append(bar, left, right, challenge);
    this.root.append(layout);

    this.controls.scheme.addEventListener("change", () =>
      void this.applyControls({ scheme: this.controls.scheme.value }));
    this.controls.rolloff.addEventListener("change", () =>
      void this.applyControls({ shape: { rolloff: Number(this.controls.rolloff.value) } }));
    this.controls.channel.addEventListener("change", () =>
      void this.applyControls({ channel: this.controls.channel.value }));
    for (const impairment of [this.controls.snr, this.controls.cfo,
                              this.controls.iq, this.controls.pa,
                              this.controls.quant]) {
      impairment.addEventListener("change", () =>
        void this.applyControls({ chain: this.buildChain() }));
    }
  }

  /** RF chain assembled from the impairment controls, in canonical order. */
  buildChain(): Array<Record<string, unknown>> {
    const chain: Array<Record<string, unknown>> = [];
    const cfo = Number(this.controls.cfo.value);
    if (cfo !== 0) chain.push({ stage: "cfo", offset_hz: cfo });
    const iq = Number(this.controls.iq.value);
    if (iq !== 0) chain.push({ stage: "iq", gain_imbalance_db: iq });
    const pa = Number(this.controls.pa.value);
    if (pa < 40) chain.push({ stage: "pa", input_backoff_db: pa });
    const bits = Number(this.controls.quant.value);
    if (bits >= 1) chain.push({ stage: "quantizer", bits, full_scale: 1.0 });
    chain.push({ stage: "awgn", snr_db: Number(this.controls.snr.value) });
    return chain;
  }

  // --- session -------------------------------------------------------------

  async start(initialSpec: SpecPatch = {}): Promise<void> {
    const info = await this.client.createSession(initialSpec);
    this.sessionId = info.session_id;
    this.handleFrame(await this.client.getFrame(this.sessionId));
    this.stream = this.client.openStream(this.sessionId, {
      onFrame: (frame) => this.handleFrame(frame),
      onStatus: (connected) => this.setConnected(connected),
      onError: (message) => this.showError(message),
    });
  }

  stop(): void {
    this.stream?.close();
  }

  get session(): string {
    return this.sessionId;
  }

  handleFrame(frame: AnalysisFrame): void {
    const decision = this.state.acceptFrame(frame);
    if (!decision.accepted) return;
    this.readouts.revision.textContent = `rev ${frame.revision}`;
    if (decision.stale) {
      this.readouts.stale.removeAttribute("hidden");
    } else {
      this.readouts.stale.setAttribute("hidden", "");
    }
    this.readouts.evm.textContent = `EVM: ${frame.scalars.evm_pct.toFixed(2)} %`;
    this.readouts.papr.textContent = `PAPR: ${frame.scalars.papr_db.toFixed(2)} dB`;
    this.readouts.ber.textContent = `BER: ${frame.scalars.est_ber.toExponential(2)}`;
    renderFrame(frame, this.state.waterfall, this.canvases);
  }

  async applyControls(patch: SpecPatch): Promise<void> {
    if (this.state.controlsLocked || !this.sessionId) return;
    this.state.beginMutation();
    this.setControlsDisabled(true);
    try {
      const revision = await this.client.patchSession(this.sessionId, patch);
      this.state.completeMutation(revision);
      // poll once so the change reflects promptly even between stream ticks
      this.handleFrame(await this.client.getFrame(this.sessionId));
    } catch (err) {
      this.state.completeMutation(null);
      this.showError(String(err));
    } finally {
      this.setControlsDisabled(false);
    }
  }

  private setControlsDisabled(disabled: boolean): void {
    for (const control of Object.values(this.controls)) {
      (control as HTMLInputElement).disabled = disabled;
    }
  }

  private setConnected(connected: boolean): void {
    this.readouts.conn.textContent = connected ? "live" : "reconnecting";
    this.readouts.conn.className = connected ? "banner ok" : "banner lost";
  }

  private showError(message: string): void {
    this.readouts.conn.textContent = `error: ${message}`;
    this.readouts.conn.className = "banner lost";
  }

  // --- challenges ------------------------------------------------------------

  async loadChallenge(): Promise<void> {
    this.scenario = await this.client.attachChallenge(this.sessionId, {
      kind: this.challengeUi.kind.value,
      difficulty: this.challengeUi.difficulty.value,
      seed: Number(this.challengeUi.seed.value),
    });
    this.challengeUi.params.textContent = JSON.stringify(
      this.scenario.params, null, 1);
    this.challengeUi.grade.textContent = "challenge loaded";
  }

  answerBody(text: string): Record<string, unknown> {
    const kind = this.scenario?.kind ?? this.challengeUi.kind.value;
    switch (kind) {
      case "hidden-message":
        return { message: text };
      case "blind-modulation":
        return { scheme: text.trim() };
      case "filter-params":
        return { value: Number(text) };
      case "cfo-hunt":
        return { cfo_hz: Number(text) };
      case "hop-pattern":
        return { pattern_id: Number(text) };
      case "slot-location": {
        const [start, stop] = text.split(",").map(Number);
        return { start, stop };
      }
      default:
        return { answer: text };
    }
  }

  async submitAnswer(): Promise<void> {
    const body = this.answerBody(this.challengeUi.answer.value);
    const grade = await this.client.answerChallenge(this.sessionId, body);
    this.challengeUi.grade.textContent =
      `grade ${grade.score.toFixed(2)} (${grade.feedback})`;
  }
}
