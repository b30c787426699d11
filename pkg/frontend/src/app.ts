// DOM wiring for the operator console: configure wizard, result-entry
// worklist, marginal dashboard, transcript export. All inference numbers
// come from the service; this file only renders them.

import {
  ApiError,
  abortSession,
  createSession,
  fetchTranscript,
  getState,
  submitResults,
} from "./api.js";
import type { SessionView } from "./types.js";
import { validateWizard, type WizardForm } from "./validate.js";
import {
  deriveViewModel,
  freshEntry,
  setToggle,
  type ResultEntryState,
} from "./viewmodel.js";
import { startPolling, type Poller } from "./poll.js";

const $ = (id: string): HTMLElement => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
};

interface AppState {
  base: string;
  sessionId: string | null;
  labels: string[];
  entry: ResultEntryState | null;
  lastView: SessionView | null;
  poller: Poller | null;
}

const state: AppState = {
  base: "",
  sessionId: null,
  labels: [],
  entry: null,
  lastView: null,
  poller: null,
};

function readWizardForm(): WizardForm {
  const value = (id: string) => ($(id) as HTMLInputElement | HTMLTextAreaElement).value;
  return {
    nIndividuals: value("f-n"),
    clustersText: value("f-clusters"),
    labelsText: value("f-labels"),
    pPrimary: value("f-pp"),
    pSecondary: value("f-ps"),
    pBasal: value("f-pb"),
    pFalseNegative: value("f-pfn"),
    pFalsePositive: value("f-pfp"),
    intervalLower: value("f-lower"),
    intervalUpper: value("f-upper"),
    kPoolsPerStep: value("f-k"),
    maxRounds: value("f-rounds"),
    seed: value("f-seed"),
  };
}

function showWizardErrors(errors: Record<string, string | undefined>): void {
  document.querySelectorAll(".field-error").forEach((el) => (el.textContent = ""));
  for (const [field, message] of Object.entries(errors)) {
    const slot = document.querySelector(`[data-error-for="${field}"]`);
    if (slot && message) slot.textContent = message;
  }
}

async function onCreate(): Promise<void> {
  const form = readWizardForm();
  const { errors, payload, labels } = validateWizard(form);
  showWizardErrors(errors as Record<string, string>);
  if (!payload) return;
  state.base = ($("f-base") as HTMLInputElement).value.replace(/\/$/, "");
  state.labels = labels;
  try {
    const view = await createSession(state.base, payload);
    state.sessionId = view.session_id;
    $("wizard").hidden = true;
    $("session").hidden = false;
    render(view);
    startSessionPolling();
  } catch (error) {
    if (error instanceof ApiError) {
      $("wizard-service-error").textContent = error.field
        ? `${error.field}: ${error.message}`
        : error.message;
    } else {
      $("wizard-service-error").textContent = String(error);
    }
  }
}

function startSessionPolling(): void {
  state.poller?.stop();
  state.poller = startPolling(
    () => getState(state.base, state.sessionId!),
    (view) => render(view),
    (error) => {
      $("session-error").textContent = String(error);
    },
  );
}

function render(view: SessionView): void {
  state.lastView = view;
  const vm = deriveViewModel(view, state.labels);

  $("s-id").textContent = vm.sessionId;
  $("s-round").textContent = String(vm.round);
  $("s-tests").textContent = String(vm.testsUsed);
  $("s-status").textContent = vm.stopped
    ? "stopped"
    : vm.computing
      ? "computing next proposal..."
      : "awaiting results";

  const bars = $("bars");
  bars.innerHTML = "";
  for (const bar of vm.individuals) {
    const row = document.createElement("div");
    row.className = `bar-row flag-${bar.flag}`;
    const label = document.createElement("span");
    label.className = "bar-label";
    label.textContent = bar.label;
    const track = document.createElement("div");
    track.className = "bar-track";
    const fill = document.createElement("div");
    fill.className = "bar-fill";
    fill.style.width = `${bar.percent}%`;
    track.appendChild(fill);
    const value = document.createElement("span");
    value.className = "bar-value";
    value.textContent = bar.marginal === null ? "-" : bar.marginal.toFixed(3);
    const flag = document.createElement("span");
    flag.className = "bar-flag";
    flag.textContent = bar.flag === "uncertain" ? "still uncertain" : bar.flag.replace("-", " ");
    row.append(label, track, value, flag);
    bars.appendChild(row);
  }

  const banner = $("classification-banner");
  if (vm.stopped && vm.classification) {
    const positives = vm.individuals
      .filter((b) => vm.classification![b.index] === 1)
      .map((b) => b.label);
    banner.hidden = false;
    banner.textContent =
      positives.length > 0
        ? `Classification: positive - ${positives.join(", ")}; everyone else negative.`
        : "Classification: all negative.";
  } else {
    banner.hidden = true;
  }

  renderWorklist(view);

  const history = $("history");
  history.innerHTML = "";
  for (const entry of vm.history) {
    const item = document.createElement("li");
    const pools = entry.pools
      .map((pool) => `{${pool.map((i) => state.labels[i] ?? `#${i}`).join(", ")}}`)
      .join(" ");
    const results =
      entry.results === null
        ? "awaiting results"
        : entry.results.map((r) => (r === 1 ? "positive" : "negative")).join(", ");
    item.textContent = `round ${entry.round}: ${pools} -> ${results}`;
    history.appendChild(item);
  }
}

function renderWorklist(view: SessionView): void {
  const worklist = $("worklist");
  const entryControls = $("entry-controls");
  if (view.stopped || view.pending_design === null) {
    worklist.innerHTML = view.computing ? "<em>computing next proposal...</em>" : "";
    entryControls.hidden = true;
    state.entry = null;
    return;
  }
  entryControls.hidden = false;
  if (
    state.entry === null ||
    state.entry.pools.length !== view.pending_design.pools.length ||
    JSON.stringify(state.entry.pools) !== JSON.stringify(view.pending_design.pools)
  ) {
    state.entry = freshEntry(view.pending_design);
  }
  worklist.innerHTML = "";
  view.pending_design.pools.forEach((pool, poolIndex) => {
    const row = document.createElement("div");
    row.className = "pool-row";
    const title = document.createElement("span");
    title.textContent = `pool ${poolIndex + 1}: {${pool
      .map((i) => state.labels[i] ?? `#${i}`)
      .join(", ")}}`;
    row.appendChild(title);
    for (const value of [1, 0] as const) {
      const button = document.createElement("button");
      button.textContent = value === 1 ? "positive" : "negative";
      button.className =
        state.entry!.toggles[poolIndex] === value ? "toggle selected" : "toggle";
      button.addEventListener("click", () => {
        state.entry = setToggle(state.entry!, poolIndex, value);
        renderWorklist(state.lastView!);
      });
      row.appendChild(button);
    }
    worklist.appendChild(row);
  });
  const submit = $("submit-results") as HTMLButtonElement;
  submit.disabled = !state.entry.complete;
}

async function onSubmitResults(): Promise<void> {
  if (!state.entry?.body || !state.sessionId) return;
  try {
    $("session-error").textContent = "";
    const view = await submitResults(state.base, state.sessionId, state.entry.body);
    state.entry = null;
    render(view);
  } catch (error) {
    if (error instanceof ApiError && error.status === 409) {
      $("session-error").textContent =
        "This round was already submitted elsewhere; refreshing the session.";
      const view = await getState(state.base, state.sessionId);
      state.entry = null;
      render(view);
    } else {
      $("session-error").textContent = String(error);
    }
  }
}

async function onAbort(): Promise<void> {
  if (!state.sessionId) return;
  try {
    const view = await abortSession(state.base, state.sessionId);
    render(view);
  } catch (error) {
    $("session-error").textContent = String(error);
  }
}

async function onExport(): Promise<void> {
  if (!state.sessionId) return;
  const text = await fetchTranscript(state.base, state.sessionId);
  const blob = new Blob([text], { type: "application/jsonl" });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement("a");
  anchor.href = url;
  anchor.download = `session-${state.sessionId}.jsonl`;
  anchor.click();
  URL.revokeObjectURL(url);
}

export function mount(): void {
  $("create-session").addEventListener("click", () => void onCreate());
  $("submit-results").addEventListener("click", () => void onSubmitResults());
  $("abort-session").addEventListener("click", () => void onAbort());
  $("export-transcript").addEventListener("click", () => void onExport());
}

if (typeof document !== "undefined" && document.getElementById("wizard")) {
  mount();
}
