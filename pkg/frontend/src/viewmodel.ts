// Pure derivation of everything the console renders from a session view.
// All probabilities come from the service; nothing is computed locally
// beyond display classification.

import type { PendingDesign, SessionView, TranscriptEvent } from "./types.js";

export type IndividualFlag =
  | "uncertain"
  | "leaning-negative"
  | "leaning-positive"
  | "classified-negative"
  | "classified-positive"
  | "unknown";

export interface IndividualBar {
  index: number;
  label: string;
  marginal: number | null;
  percent: number; // bar width, 0..100
  flag: IndividualFlag;
}

export interface RoundHistoryEntry {
  round: number;
  pools: number[][];
  marginalsBefore: number[] | null;
  results: number[] | null;
}

export interface ResultEntryState {
  pools: number[][];
  toggles: (0 | 1 | null)[];
  complete: boolean;
  body: number[] | null;
}

export interface SessionViewModel {
  sessionId: string;
  round: number;
  testsUsed: number;
  stopped: boolean;
  computing: boolean;
  classification: number[] | null;
  individuals: IndividualBar[];
  history: RoundHistoryEntry[];
  pending: PendingDesign | null;
}

export function individualLabel(index: number, labels: string[]): string {
  const label = labels[index];
  return label !== undefined && label !== "" ? label : `#${index}`;
}

function flagFor(
  marginal: number | null,
  interval: { lower: number; upper: number } | null,
  stopped: boolean,
  classified: number | null,
): IndividualFlag {
  if (marginal === null) return "unknown";
  if (stopped && classified !== null) {
    return classified === 1 ? "classified-positive" : "classified-negative";
  }
  if (interval !== null && marginal >= interval.lower && marginal <= interval.upper) {
    return "uncertain";
  }
  return marginal > 0.5 ? "leaning-positive" : "leaning-negative";
}

export function deriveIndividuals(view: SessionView, labels: string[]): IndividualBar[] {
  const bars: IndividualBar[] = [];
  for (let i = 0; i < view.n_individuals; i++) {
    const marginal = view.marginals === null ? null : view.marginals[i] ?? null;
    const classified =
      view.classification === null ? null : view.classification[i] ?? null;
    bars.push({
      index: i,
      label: individualLabel(i, labels),
      marginal,
      percent: marginal === null ? 0 : Math.round(marginal * 1000) / 10,
      flag: flagFor(marginal, view.interval, view.stopped, classified),
    });
  }
  return bars;
}

export function deriveHistory(transcript: TranscriptEvent[]): RoundHistoryEntry[] {
  const rounds = new Map<number, RoundHistoryEntry>();
  for (const event of transcript) {
    if (event.type === "proposed" && event.round !== undefined) {
      rounds.set(event.round, {
        round: event.round,
        pools: event.pools ?? [],
        marginalsBefore: event.marginals ?? null,
        results: null,
      });
    } else if (event.type === "results" && event.round !== undefined) {
      const entry = rounds.get(event.round);
      if (entry) entry.results = event.results ?? null;
    }
  }
  return [...rounds.values()].sort((a, b) => a.round - b.round);
}

export function deriveViewModel(view: SessionView, labels: string[]): SessionViewModel {
  return {
    sessionId: view.session_id,
    round: view.round,
    testsUsed: view.tests_used,
    stopped: view.stopped,
    computing: view.computing,
    classification: view.classification,
    individuals: deriveIndividuals(view, labels),
    history: deriveHistory(view.transcript),
    pending: view.pending_design,
  };
}

// --- result entry state machine ---

export function freshEntry(pending: PendingDesign): ResultEntryState {
  return {
    pools: pending.pools,
    toggles: pending.pools.map(() => null),
    complete: false,
    body: null,
  };
}

export function setToggle(
  entry: ResultEntryState,
  poolIndex: number,
  value: 0 | 1,
): ResultEntryState {
  const toggles = entry.toggles.slice();
  if (poolIndex < 0 || poolIndex >= toggles.length) return entry;
  toggles[poolIndex] = value;
  const complete = toggles.every((t) => t !== null);
  return {
    pools: entry.pools,
    toggles,
    complete,
    body: complete ? toggles.map((t) => t as number) : null,
  };
}
