/**
 * Review-session state: candidate rows as the service reports them, plus
 * client-side filters and the decide/refresh cycle.
 *
 * Two rules the whole UI leans on:
 *   - state is always reconstructible from service responses (a refresh
 *     discards everything local), and
 *   - filtering never reorders rows, so the server's ranking survives any
 *     combination of filters.
 */

import {
  ApiClient,
  CandidateRow,
  ExportDoc,
  Pair,
  Replacement,
  Verdict,
} from "./api.js";

export type DecisionFilter = "all" | "undecided" | Verdict;

export interface Filters {
  maxRank: number | null; // show rows with rank <= maxRank
  decision: DecisionFilter;
  relation: string; // substring match on either relation name; "" = all
}

export const defaultFilters: Filters = { maxRank: null, decision: "all", relation: "" };

export function pairKey(row: { source: Pair; target: Pair }): string {
  return `${row.source[0]}.${row.source[1]}->${row.target[0]}.${row.target[1]}`;
}

export function applyFilters(rows: CandidateRow[], filters: Filters): CandidateRow[] {
  return rows.filter((row) => {
    if (filters.maxRank !== null && row.rank > filters.maxRank) return false;
    if (filters.decision === "undecided" && row.decision !== null) return false;
    if (
      filters.decision !== "all" &&
      filters.decision !== "undecided" &&
      row.decision !== filters.decision
    ) {
      return false;
    }
    if (filters.relation) {
      const needle = filters.relation.toLowerCase();
      const hit =
        row.source[0].toLowerCase().includes(needle) ||
        row.target[0].toLowerCase().includes(needle);
      if (!hit) return false;
    }
    return true;
  });
}

export function decisionCounts(rows: CandidateRow[]): Record<DecisionFilter, number> {
  const counts: Record<DecisionFilter, number> = {
    all: rows.length,
    undecided: 0,
    accepted: 0,
    rejected: 0,
    edited: 0,
  };
  for (const row of rows) {
    if (row.decision === null) counts.undecided += 1;
    else counts[row.decision] += 1;
  }
  return counts;
}

export class ReviewSession {
  rows: CandidateRow[] = [];
  filters: Filters = { ...defaultFilters };
  lastError: string | null = null;

  constructor(
    private readonly api: ApiClient,
    readonly jobId: string,
  ) {}

  /** Discard local state and rebuild purely from the service. */
  async refresh(): Promise<void> {
    this.rows = await this.api.candidates(this.jobId);
    this.lastError = null;
  }

  visible(): CandidateRow[] {
    return applyFilters(this.rows, this.filters);
  }

  /**
   * Record a verdict: optimistic local update, POST, and on failure a full
   * refresh so the view falls back to the server's truth.
   */
  async decide(row: CandidateRow, verdict: Verdict, replacement?: Replacement): Promise<void> {
    const key = pairKey(row);
    const target = this.rows.find((r) => pairKey(r) === key);
    if (!target) throw new Error(`row ${key} is not in the session`);
    const previous: Pick<CandidateRow, "decision" | "replacement"> = {
      decision: target.decision,
      replacement: target.replacement,
    };
    target.decision = verdict;
    target.replacement = replacement ?? null;
    try {
      await this.api.decide(this.jobId, {
        source: row.source,
        target: row.target,
        verdict,
        replacement_source: replacement?.source,
        replacement_target: replacement?.target,
      });
      this.lastError = null;
    } catch (error) {
      // Reconcile: the server did not take the decision, so re-read its state
      // and surface the conflict (refresh clears lastError, so set it after).
      target.decision = previous.decision;
      target.replacement = previous.replacement;
      await this.refresh();
      this.lastError = error instanceof Error ? error.message : String(error);
      throw error;
    }
  }

  exportAlignment(): Promise<ExportDoc> {
    return this.api.exportAlignment(this.jobId);
  }

  /** Snapshot used by tests and by the view to detect changes. */
  snapshot(): Array<{ key: string; rank: number; decision: Verdict | null }> {
    return this.rows.map((row) => ({
      key: pairKey(row),
      rank: row.rank,
      decision: row.decision,
    }));
  }
}
