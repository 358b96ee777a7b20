// Wire types of the lab-service HTTP/stream API.

export interface PsdView {
  freq_bins_hz: number[];
  power_db: number[];
  resolution_bw_hz: number;
}

export interface EyeView {
  traces: number[][];
  samples_per_symbol: number;
  rail: string;
}

export interface CcdfView {
  threshold_db: number[];
  prob_exceed: number[];
}

export interface Scalars {
  evm_pct: number;
  papr_db: number;
  est_ber: number;
}

export interface AnalysisFrame {
  revision: number;
  timestamp: number;
  psd: PsdView;
  constellation: number[][];
  eye: EyeView;
  ccdf: CcdfView;
  scalars: Scalars;
  spec_echo?: Record<string, unknown>;
}

export interface SessionInfo {
  session_id: string;
  revision: number;
}

export interface GradeReport {
  score: number;
  breakdown: Record<string, unknown>;
  feedback: string;
}

export interface ChallengeScenario {
  kind: string;
  difficulty: string;
  trainee_id: string;
  seed: number;
  params: Record<string, unknown>;
}

/** Nested partial of the session spec, sent as a PATCH body. */
export type SpecPatch = Record<string, unknown>;
