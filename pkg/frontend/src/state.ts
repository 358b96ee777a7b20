// Client-side session state: revision bookkeeping and the waterfall buffer.
// All DSP lives on the server; this only decides what may be rendered.

import type { AnalysisFrame } from "./types.js";

export const WATERFALL_ROWS = 200;

export interface FrameDecision {
  accepted: boolean;
  stale: boolean; // rendered but older than a mutation we already sent
}

export class PanelState {
  lastReceivedRevision = 0;
  /** Revision returned by the most recent accepted mutation. */
  pendingRevision: number | null = null;
  /** Controls are locked while a mutation round-trip is in flight. */
  controlsLocked = false;
  waterfall: number[][] = [];

  /**
   * Gate an incoming frame: displayed revisions never decrease; frames
   * older than a pending mutation are marked stale.
   */
  acceptFrame(frame: AnalysisFrame): FrameDecision {
    if (frame.revision < this.lastReceivedRevision) {
      return { accepted: false, stale: true };
    }
    this.lastReceivedRevision = frame.revision;
    const stale =
      this.pendingRevision !== null && frame.revision < this.pendingRevision;
    if (this.pendingRevision !== null && frame.revision >= this.pendingRevision) {
      this.pendingRevision = null;
    }
    this.pushWaterfallRow(frame.psd.power_db);
    return { accepted: true, stale };
  }

  beginMutation(): void {
    this.controlsLocked = true;
  }

  completeMutation(newRevision: number | null): void {
    this.controlsLocked = false;
    if (newRevision !== null && newRevision > (this.pendingRevision ?? 0)) {
      this.pendingRevision = newRevision;
    }
  }

  private pushWaterfallRow(row: number[]): void {
    this.waterfall.push(row.slice());
    if (this.waterfall.length > WATERFALL_ROWS) {
      this.waterfall.splice(0, this.waterfall.length - WATERFALL_ROWS);
    }
  }
}
