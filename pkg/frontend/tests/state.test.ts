import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, CandidateRow } from "../src/api.js";
import { applyFilters, decisionCounts, defaultFilters, ReviewSession } from "../src/state.js";
import { FakeService, sampleCandidates } from "./fake_service.js";

function makeSession(service: FakeService): ReviewSession {
  return new ReviewSession(new ApiClient("", service.fetch), "job1");
}

describe("review round trip", () => {
  it("accept one + reject another exports exactly the accepted pair", async () => {
    const service = new FakeService(sampleCandidates());
    const session = makeSession(service);
    await session.refresh();

    const [best, runnerUp] = session.rows;
    await session.decide(best!, "accepted");
    await session.decide(runnerUp!, "rejected");

    const doc = await session.exportAlignment();
    expect(doc.alignment).toEqual([
      { source: ["meds", "generic_name"], target: ["Drugs", "brand_name"] },
    ]);
    expect(doc.draft).toBe(true);
  });

  it("a fresh session reconstructs identical view state from the service alone", async () => {
    const service = new FakeService(sampleCandidates());
    const session = makeSession(service);
    await session.refresh();
    await session.decide(session.rows[0]!, "accepted");
    await session.decide(session.rows[1]!, "rejected");

    const fresh = makeSession(service);
    await fresh.refresh();
    expect(fresh.snapshot()).toEqual(session.snapshot());
    expect(fresh.rows).toEqual(session.rows);
  });

  it("later decisions supersede earlier ones", async () => {
    const service = new FakeService(sampleCandidates());
    const session = makeSession(service);
    await session.refresh();
    await session.decide(session.rows[0]!, "rejected");
    await session.decide(session.rows[0]!, "accepted");
    const doc = await session.exportAlignment();
    expect(doc.alignment).toHaveLength(1);
  });

  it("edited decisions export the replacement pair", async () => {
    const service = new FakeService(sampleCandidates());
    const session = makeSession(service);
    await session.refresh();
    await session.decide(session.rows[0]!, "edited", {
      source: ["meds", "generic_name"],
      target: ["Drugs", "uses"],
    });
    const doc = await session.exportAlignment();
    expect(doc.alignment).toEqual([
      { source: ["meds", "generic_name"], target: ["Drugs", "uses"] },
    ]);
  });

  it("rejecting everything for a relation empties the export", async () => {
    const service = new FakeService(sampleCandidates());
    const session = makeSession(service);
    await session.refresh();
    for (const row of [...session.rows]) {
      await session.decide(row, "rejected");
    }
    const doc = await session.exportAlignment();
    expect(doc.alignment).toEqual([]);
  });
});

describe("optimistic updates", () => {
  it("applies the verdict locally and keeps it on acknowledgment", async () => {
    const service = new FakeService(sampleCandidates());
    const session = makeSession(service);
    await session.refresh();
    const row = session.rows[0]!;
    const pending = session.decide(row, "accepted");
    expect(row.decision).toBe("accepted"); // visible before the ack lands
    await pending;
    expect(row.decision).toBe("accepted");
    expect(session.lastError).toBeNull();
  });

  it("rolls back and refreshes when the server rejects the decision", async () => {
    const service = new FakeService(sampleCandidates());
    const session = makeSession(service);
    await session.refresh();
    const row = session.rows[0]!;
    // Simulate a pair the server does not know (e.g. superseded job data).
    row.source = ["meds", "ghost"];
    await expect(session.decide(row, "accepted")).rejects.toThrow(ApiError);
    expect(session.lastError).toContain("candidate set");
    // State came back from the service, so no row carries the bogus decision.
    expect(session.rows.every((r) => r.decision === null)).toBe(true);
  });
});

describe("filters", () => {
  const rows = (): CandidateRow[] =>
    sampleCandidates().map((row) => ({
      ...row,
      target_attribute: row.target[1],
      decision: null,
      replacement: null,
    }));

  it("undecided filter hides decided rows", () => {
    const all = rows();
    all[0]!.decision = "accepted";
    const visible = applyFilters(all, { ...defaultFilters, decision: "undecided" });
    expect(visible).toHaveLength(2);
  });

  it("rank cutoff keeps only the top of each list", () => {
    const visible = applyFilters(rows(), { ...defaultFilters, maxRank: 1 });
    expect(visible.every((row) => row.rank === 1)).toBe(true);
    expect(visible).toHaveLength(2);
  });

  it("relation filter matches either side, case-insensitively", () => {
    expect(applyFilters(rows(), { ...defaultFilters, relation: "drugs" })).toHaveLength(3);
    expect(applyFilters(rows(), { ...defaultFilters, relation: "nowhere" })).toHaveLength(0);
  });

  it("never reorders rows within an equal filter", () => {
    const all = rows();
    const visible = applyFilters(all, { ...defaultFilters, relation: "meds" });
    const keys = visible.map((row) => row.source.join(".") + row.target.join("."));
    const original = all
      .filter((row) => keys.includes(row.source.join(".") + row.target.join(".")))
      .map((row) => row.source.join(".") + row.target.join("."));
    expect(keys).toEqual(original);
  });

  it("counts decisions for the filter labels", () => {
    const all = rows();
    all[0]!.decision = "accepted";
    all[1]!.decision = "rejected";
    const counts = decisionCounts(all);
    expect(counts).toMatchObject({ all: 3, accepted: 1, rejected: 1, undecided: 1 });
  });

  it("empty candidate list stays empty under any filter", () => {
    expect(applyFilters([], { ...defaultFilters, decision: "undecided" })).toEqual([]);
  });
});
