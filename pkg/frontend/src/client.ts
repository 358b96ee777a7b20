// Thin wrapper over the lab-service HTTP + WebSocket API with reconnect.

import type {
  AnalysisFrame,
  ChallengeScenario,
  GradeReport,
  SessionInfo,
  SpecPatch,
} from "./types.js";

export type WebSocketFactory = (url: string) => WebSocket;

export interface StreamHandle {
  close(): void;
  sendUpdate(spec: SpecPatch): void;
}

export interface StreamCallbacks {
  onFrame(frame: AnalysisFrame): void;
  onStatus?(connected: boolean): void;
  onError?(message: string): void;
}

async function expectOk(response: Response): Promise<Response> {
  if (!response.ok) {
    const body = await response.text();
    throw new Error(`${response.status} ${response.statusText}: ${body}`);
  }
  return response;
}

export class LabClient {
  constructor(
    private readonly baseUrl: string,
    private readonly wsFactory: WebSocketFactory = (url) => new WebSocket(url),
  ) {}

  async createSession(spec: SpecPatch = {}): Promise<SessionInfo> {
    const response = await expectOk(
      await fetch(`${this.baseUrl}/sessions`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(spec),
      }),
    );
    return (await response.json()) as SessionInfo;
  }

  async patchSession(sessionId: string, spec: SpecPatch): Promise<number> {
    const response = await expectOk(
      await fetch(`${this.baseUrl}/sessions/${sessionId}`, {
        method: "PATCH",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(spec),
      }),
    );
    return ((await response.json()) as { revision: number }).revision;
  }

  async getFrame(sessionId: string): Promise<AnalysisFrame> {
    const response = await expectOk(
      await fetch(`${this.baseUrl}/sessions/${sessionId}/frame`),
    );
    return (await response.json()) as AnalysisFrame;
  }

  async attachChallenge(
    sessionId: string,
    body: { kind: string; difficulty: string; trainee_id?: string; seed?: number },
  ): Promise<ChallengeScenario> {
    const response = await expectOk(
      await fetch(`${this.baseUrl}/sessions/${sessionId}/challenge`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
    return (await response.json()) as ChallengeScenario;
  }

  async answerChallenge(
    sessionId: string,
    answer: Record<string, unknown>,
  ): Promise<GradeReport> {
    const response = await expectOk(
      await fetch(`${this.baseUrl}/sessions/${sessionId}/challenge/answer`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(answer),
      }),
    );
    return (await response.json()) as GradeReport;
  }

  /**
   * Subscribe to the frame stream. Reconnects with backoff until closed;
   * the session id makes resume trivial (frames are server-computed).
   */
  openStream(sessionId: string, callbacks: StreamCallbacks): StreamHandle {
    const wsUrl =
      this.baseUrl.replace(/^http/, "ws") + `/sessions/${sessionId}/stream`;
    let socket: WebSocket | null = null;
    let closed = false;
    let retryMs = 250;

    const connect = () => {
      if (closed) return;
      socket = this.wsFactory(wsUrl);
      socket.onopen = () => {
        retryMs = 250;
        callbacks.onStatus?.(true);
      };
      socket.onmessage = (event: MessageEvent) => {
        const data = JSON.parse(String(event.data));
        if (data && typeof data.revision === "number" && data.psd) {
          callbacks.onFrame(data as AnalysisFrame);
        } else if (data && data.type === "error") {
          callbacks.onError?.(`${data.field}: ${data.message}`);
        }
      };
      const retry = () => {
        callbacks.onStatus?.(false);
        if (!closed) {
          setTimeout(connect, retryMs);
          retryMs = Math.min(retryMs * 2, 5000);
        }
      };
      socket.onclose = retry;
      socket.onerror = () => socket?.close();
    };
    connect();

    return {
      close() {
        closed = true;
        socket?.close();
      },
      sendUpdate(spec: SpecPatch) {
        socket?.send(JSON.stringify({ type: "update", spec }));
      },
    };
  }
}
