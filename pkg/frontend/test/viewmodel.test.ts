import { describe, expect, it } from "vitest";

import type { SessionView } from "../src/types.js";
import {
  deriveHistory,
  deriveIndividuals,
  deriveViewModel,
  freshEntry,
  setToggle,
} from "../src/viewmodel.js";

function view(overrides: Partial<SessionView> = {}): SessionView {
  return {
    session_id: "abc",
    created_at: "t0",
    updated_at: "t1",
    n_individuals: 3,
    interval: { lower: 0.1, upper: 0.9 },
    round: 1,
    tests_used: 1,
    marginals: [0.5, 0.95, 0.02],
    stopped: false,
    classification: null,
    computing: false,
    pending_design: { round: 2, pools: [[0, 1], [2]] },
    transcript: [
      { ts: "t0", type: "created" },
      { ts: "t0", type: "proposed", round: 1, pools: [[0, 1, 2]], marginals: [0.2, 0.2, 0.2] },
      { ts: "t1", type: "results", round: 1, results: [1] },
      { ts: "t1", type: "proposed", round: 2, pools: [[0, 1], [2]], marginals: [0.5, 0.95, 0.02] },
    ],
    config: {} as SessionView["config"],
    ...overrides,
  };
}

describe("deriveIndividuals", () => {
  it("flags marginals inside the interval as uncertain", () => {
    const bars = deriveIndividuals(view(), []);
    expect(bars[0]!.flag).toBe("uncertain"); // 0.5 inside [0.1, 0.9]
    expect(bars[1]!.flag).toBe("leaning-positive"); // 0.95 above
    expect(bars[2]!.flag).toBe("leaning-negative"); // 0.02 below
  });

  it("uses classification flags once stopped", () => {
    const bars = deriveIndividuals(
      view({ stopped: true, classification: [0, 1, 0] }),
      [],
    );
    expect(bars.map((b) => b.flag)).toEqual([
      "classified-negative",
      "classified-positive",
      "classified-negative",
    ]);
  });

  it("renders operator labels with index fallback", () => {
    const bars = deriveIndividuals(view(), ["alice"]);
    expect(bars.map((b) => b.label)).toEqual(["alice", "#1", "#2"]);
  });

  it("turns marginals into bar widths", () => {
    const bars = deriveIndividuals(view(), []);
    expect(bars[1]!.percent).toBeCloseTo(95.0);
  });
});

describe("deriveHistory", () => {
  it("pairs proposals with their results in round order", () => {
    const history = deriveHistory(view().transcript);
    expect(history).toHaveLength(2);
    expect(history[0]!).toMatchObject({ round: 1, results: [1] });
    expect(history[1]!).toMatchObject({ round: 2, results: null });
    expect(history[1]!.pools).toEqual([[0, 1], [2]]);
  });
});

describe("result entry state machine", () => {
  it("disables submission until every pool has a toggle", () => {
    let entry = freshEntry({ round: 2, pools: [[0, 1], [2], [0, 2]] });
    expect(entry.complete).toBe(false);
    entry = setToggle(entry, 0, 1);
    entry = setToggle(entry, 1, 0);
    expect(entry.complete).toBe(false);
    expect(entry.body).toBeNull();
    entry = setToggle(entry, 2, 0);
    expect(entry.complete).toBe(true);
    expect(entry.body).toEqual([1, 0, 0]);
  });

  it("request body length equals the number of pending pools", () => {
    let entry = freshEntry({ round: 1, pools: [[0], [1], [2]] });
    entry = setToggle(entry, 0, 0);
    entry = setToggle(entry, 1, 1);
    entry = setToggle(entry, 2, 1);
    expect(entry.body).toHaveLength(3);
  });

  it("ignores out-of-range indices", () => {
    const entry = freshEntry({ round: 1, pools: [[0]] });
    expect(setToggle(entry, 5, 1)).toBe(entry);
  });
});

describe("deriveViewModel", () => {
  it("exposes stopped sessions without a pending worklist", () => {
    const vm = deriveViewModel(
      view({ stopped: true, pending_design: null, classification: [0, 1, 0] }),
      [],
    );
    expect(vm.pending).toBeNull();
    expect(vm.classification).toEqual([0, 1, 0]);
    expect(vm.stopped).toBe(true);
  });
});
