// @vitest-environment happy-dom
// Panel behavior against a stubbed client: readouts, revision gating,
// control locking, challenge flow.

import { beforeEach, describe, expect, it, vi } from "vitest";

import { LabClient } from "../src/client.js";
import { LabPanel } from "../src/panel.js";
import type { AnalysisFrame } from "../src/types.js";

function frame(revision: number, evm = 5.0): AnalysisFrame {
  const bins = Array.from({ length: 32 }, (_, i) => i - 16);
  return {
    revision,
    timestamp: revision,
    psd: { freq_bins_hz: bins, power_db: bins.map(() => -40), resolution_bw_hz: 1 },
    constellation: [[0.7, 0.7], [-0.7, 0.7]],
    eye: { traces: [[0, 1, 0], [0, -1, 0]], samples_per_symbol: 1, rail: "i" },
    ccdf: { threshold_db: [0, 3, 6], prob_exceed: [1, 0.1, 0] },
    scalars: { evm_pct: evm, papr_db: 3.5, est_ber: 1e-4 },
  };
}

function stubClient(): LabClient {
  const client = Object.create(LabClient.prototype) as LabClient;
  let revision = 1;
  Object.assign(client, {
    createSession: vi.fn(async () => ({ session_id: "s1", revision: 1 })),
    getFrame: vi.fn(async () => frame(revision)),
    patchSession: vi.fn(async () => ++revision),
    openStream: vi.fn(() => ({ close() {}, sendUpdate() {} })),
    attachChallenge: vi.fn(async (_: string, body: { kind: string }) => ({
      kind: body.kind, difficulty: "easy", trainee_id: "s1", seed: 0,
      params: { sps: 8 },
    })),
    answerChallenge: vi.fn(async () => ({
      score: 1.0, breakdown: {}, feedback: "exact",
    })),
  });
  return client;
}

describe("LabPanel", () => {
  let panel: LabPanel;
  let client: LabClient;

  beforeEach(async () => {
    document.body.innerHTML = "";
    client = stubClient();
    panel = new LabPanel(document.body, client);
    await panel.start();
  });

  it("renders scalar readouts from the first frame", () => {
    expect(document.querySelector("#evm-readout")!.textContent).toContain("5.00");
    expect(document.querySelector("#revision-readout")!.textContent).toBe("rev 1");
  });

  it("ignores frames with a lower revision than already rendered", () => {
    panel.handleFrame(frame(4, 9.0));
    panel.handleFrame(frame(2, 1.0)); // out of order: must not render
    expect(document.querySelector("#revision-readout")!.textContent).toBe("rev 4");
    expect(document.querySelector("#evm-readout")!.textContent).toContain("9.00");
  });

  it("marks frames older than the pending mutation as stale", async () => {
    await panel.applyControls({ shape: { rolloff: 0.9 } }); // revision -> 2
    panel.state.completeMutation(5); // pretend another mutation is pending
    panel.handleFrame(frame(3));
    expect(document.querySelector("#stale-badge")!.hasAttribute("hidden")).toBe(false);
    panel.handleFrame(frame(5));
    expect(document.querySelector("#stale-badge")!.hasAttribute("hidden")).toBe(true);
  });

  it("locks controls while a mutation is in flight", async () => {
    const pending = panel.applyControls({ scheme: "qam16" });
    expect(panel.state.controlsLocked).toBe(true);
    expect((document.querySelector("#ctl-scheme") as HTMLSelectElement).disabled)
      .toBe(true);
    await pending;
    expect(panel.state.controlsLocked).toBe(false);
    expect((document.querySelector("#ctl-scheme") as HTMLSelectElement).disabled)
      .toBe(false);
  });

  it("builds the impairment chain from control values", () => {
    (document.querySelector("#ctl-cfo") as HTMLInputElement).value = "120";
    (document.querySelector("#ctl-snr") as HTMLInputElement).value = "12";
    (document.querySelector("#ctl-quant") as HTMLInputElement).value = "6";
    const chain = panel.buildChain();
    expect(chain.map((s) => s.stage)).toEqual(["cfo", "quantizer", "awgn"]);
    expect(chain[2].snr_db).toBe(12);
  });

  it("runs the challenge flow and renders the grade", async () => {
    (document.querySelector("#ch-kind") as HTMLSelectElement).value =
      "hidden-message";
    await panel.loadChallenge();
    expect(document.querySelector("#ch-params")!.textContent).toContain("sps");
    (document.querySelector("#ch-answer") as HTMLInputElement).value = "SECRET";
    await panel.submitAnswer();
    expect(document.querySelector("#grade-readout")!.textContent)
      .toContain("grade 1.00");
    expect(client.answerChallenge).toHaveBeenCalledWith("s1", { message: "SECRET" });
  });

  it("maps answers per challenge kind", () => {
    expect(panel.answerBody("42.5")).toHaveProperty("message");
    (document.querySelector("#ch-kind") as HTMLSelectElement).value = "cfo-hunt";
    expect(panel.answerBody("42.5")).toEqual({ cfo_hz: 42.5 });
    (document.querySelector("#ch-kind") as HTMLSelectElement).value =
      "slot-location";
    expect(panel.answerBody("100,200")).toEqual({ start: 100, stop: 200 });
  });
});
