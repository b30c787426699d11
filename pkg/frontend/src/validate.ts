// Client-side validation for the configure wizard. The service re-validates
// everything; these checks exist so bad input never leaves the form.

import type { SessionConfigPayload } from "./types.js";

export interface WizardForm {
  nIndividuals: string;
  clustersText: string; // one cluster per line, comma-separated indices, first = primary
  labelsText: string; // optional operator names, one per line
  pPrimary: string;
  pSecondary: string;
  pBasal: string;
  pFalseNegative: string;
  pFalsePositive: string;
  intervalLower: string; // both empty = no interval (single-round mode)
  intervalUpper: string;
  kPoolsPerStep: string;
  maxRounds: string;
  seed: string;
}

export interface ValidationResult {
  errors: Partial<Record<keyof WizardForm, string>>;
  payload: SessionConfigPayload | null;
  labels: string[];
}

function parseProbability(raw: string): number | null {
  const value = Number(raw);
  if (raw.trim() === "" || !Number.isFinite(value) || value < 0 || value > 1) {
    return null;
  }
  return value;
}

export function parseClusters(text: string): number[][] | null {
  const clusters: number[][] = [];
  for (const line of text.split("\n")) {
    const trimmed = line.trim();
    if (trimmed === "") continue;
    const members = trimmed.split(",").map((tok) => Number(tok.trim()));
    if (members.length === 0 || members.some((m) => !Number.isInteger(m) || m < 0)) {
      return null;
    }
    clusters.push(members);
  }
  return clusters.length > 0 ? clusters : null;
}

export function clustersCoverPopulation(clusters: number[][], n: number): boolean {
  const seen = new Set<number>();
  for (const cluster of clusters) {
    for (const member of cluster) {
      if (member >= n || seen.has(member)) return false;
      seen.add(member);
    }
  }
  return seen.size === n;
}

export function validateWizard(form: WizardForm): ValidationResult {
  const errors: ValidationResult["errors"] = {};

  const n = Number(form.nIndividuals);
  if (!Number.isInteger(n) || n < 1) {
    errors.nIndividuals = "population size must be a positive integer";
  }

  const clusters = parseClusters(form.clustersText);
  if (clusters === null) {
    errors.clustersText = "one cluster per line: comma-separated indices, first is the primary";
  } else if (Number.isInteger(n) && n >= 1 && !clustersCoverPopulation(clusters, n)) {
    errors.clustersText = `clusters must cover each index 0..${n - 1} exactly once`;
  }

  const probabilities: [keyof WizardForm, string][] = [
    ["pPrimary", form.pPrimary],
    ["pSecondary", form.pSecondary],
    ["pBasal", form.pBasal],
    ["pFalseNegative", form.pFalseNegative],
    ["pFalsePositive", form.pFalsePositive],
  ];
  const parsed: Record<string, number> = {};
  for (const [field, raw] of probabilities) {
    const value = parseProbability(raw);
    if (value === null) {
      errors[field] = "must be a probability in [0, 1]";
    } else {
      parsed[field] = value;
    }
  }

  const lowerRaw = form.intervalLower.trim();
  const upperRaw = form.intervalUpper.trim();
  let interval: { lower: number; upper: number } | null = null;
  if ((lowerRaw === "") !== (upperRaw === "")) {
    errors.intervalLower = "set both interval bounds or neither";
  } else if (lowerRaw !== "") {
    const lower = parseProbability(lowerRaw);
    const upper = parseProbability(upperRaw);
    if (lower === null) errors.intervalLower = "must be a probability in [0, 1]";
    if (upper === null) errors.intervalUpper = "must be a probability in [0, 1]";
    if (lower !== null && upper !== null) {
      if (lower >= upper) {
        errors.intervalLower = "lower bound must be below the upper bound";
      } else {
        interval = { lower, upper };
      }
    }
  }

  const k = Number(form.kPoolsPerStep);
  if (!Number.isInteger(k) || k < 1) {
    errors.kPoolsPerStep = "pools per round must be a positive integer";
  }

  let maxRounds: number | null = null;
  if (form.maxRounds.trim() !== "") {
    maxRounds = Number(form.maxRounds);
    if (!Number.isInteger(maxRounds) || maxRounds < 1) {
      errors.maxRounds = "round cap must be a positive integer (or empty)";
    }
  }

  const seed = form.seed.trim() === "" ? 0 : Number(form.seed);
  if (!Number.isInteger(seed) || seed < 0) {
    errors.seed = "seed must be a non-negative integer";
  }

  const labels = form.labelsText
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line !== "");

  if (Object.keys(errors).length > 0 || clusters === null) {
    return { errors, payload: null, labels };
  }
  return {
    errors,
    labels,
    payload: {
      n_individuals: n,
      clusters,
      p_primary: parsed.pPrimary!,
      p_secondary: parsed.pSecondary!,
      p_basal: parsed.pBasal!,
      p_false_negative: parsed.pFalseNegative!,
      p_false_positive: parsed.pFalsePositive!,
      k_pools_per_step: k,
      interval,
      max_rounds: maxRounds,
      seed,
    },
  };
}
