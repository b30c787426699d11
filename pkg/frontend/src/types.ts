// Wire types for the /v1 session API. Field names mirror the service's
// configuration format; the console never computes probabilities itself.

export interface DecisionIntervalWire {
  lower: number;
  upper: number;
}

export interface SessionConfigPayload {
  n_individuals: number;
  clusters: number[][];
  p_primary: number;
  p_secondary: number;
  p_basal: number;
  p_false_negative: number;
  p_false_positive: number;
  k_pools_per_step: number;
  interval: DecisionIntervalWire | null;
  gibbs?: { n_samples?: number; burn_in?: number; max_thinning?: number };
  hill_climb?: { n_restarts?: number; n_perturbations?: number; max_steps?: number };
  max_rounds?: number | null;
  seed: number;
}

export interface PendingDesign {
  round: number;
  pools: number[][];
}

export interface TranscriptEvent {
  ts: string;
  type: "created" | "proposed" | "results" | "stopped" | "aborted";
  round?: number;
  pools?: number[][];
  results?: number[];
  marginals?: number[];
  classification?: number[];
  truncated?: boolean;
  config?: SessionConfigPayload;
}

export interface SessionView {
  session_id: string;
  created_at: string;
  updated_at: string;
  n_individuals: number;
  interval: DecisionIntervalWire | null;
  chain_diagnostics?: string | null;
  round: number;
  tests_used: number;
  marginals: number[] | null;
  stopped: boolean;
  classification: number[] | null;
  computing: boolean;
  pending_design: PendingDesign | null;
  transcript: TranscriptEvent[];
  config: SessionConfigPayload;
}

export interface SessionListEntry {
  session_id: string;
  created_at: string;
  updated_at: string;
  round: number;
  stopped: boolean;
  computing: boolean;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  field?: string;
}
