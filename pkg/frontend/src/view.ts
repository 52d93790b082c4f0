/**
 * DOM rendering. Everything here is a pure projection of session state;
 * no handler mutates scores, ranks, or anything else the service owns.
 */

import { CandidateRow, JobSummary, Verdict } from "./api.js";
import { decisionCounts, ReviewSession } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: Array<Node | string>
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (key === "class") node.className = value;
    else node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

function confBar(value: number | null, label: string): HTMLElement {
  if (value === null) {
    return el("div", { class: "conf conf-missing", title: `${label}: not scored` }, "–");
  }
  const pct = Math.round(value * 100);
  const bar = el("div", { class: "conf", title: `${label}: ${value.toFixed(3)}` });
  const fill = el("span", { class: "conf-fill" });
  fill.style.width = `${Math.min(100, pct)}%`;
  bar.append(fill, el("span", { class: "conf-num" }, value.toFixed(2)));
  return bar;
}

export function renderJobList(
  container: HTMLElement,
  jobs: JobSummary[],
  onOpen: (jobId: string) => void,
): void {
  container.replaceChildren();
  const matchJobs = jobs.filter((j) => j.kind === "match");
  if (!matchJobs.length) {
    container.append(el("p", { class: "hint" }, "No match jobs yet. Run one with the CLI, then refresh."));
    return;
  }
  const list = el("ul", { class: "job-list" });
  for (const job of matchJobs) {
    const button = el("button", { class: "job-open" }, `${job.id} — ${job.state}`);
    if (job.state !== "done") button.setAttribute("disabled", "true");
    button.addEventListener("click", () => onOpen(job.id));
    list.append(el("li", {}, button, job.error ? el("span", { class: "err" }, ` ${job.error}`) : ""));
  }
  container.append(list);
}

export interface ViewCallbacks {
  onDecide: (row: CandidateRow, verdict: Verdict) => void;
  onEdit: (row: CandidateRow) => void;
  onFiltersChanged: () => void;
  onExport: () => void;
  onRefresh: () => void;
}

export function renderSession(
  container: HTMLElement,
  session: ReviewSession,
  callbacks: ViewCallbacks,
): void {
  container.replaceChildren();
  const counts = decisionCounts(session.rows);

  const filterBar = el("div", { class: "filters" });
  const decisionSelect = el("select", { id: "filter-decision" });
  for (const option of ["all", "undecided", "accepted", "rejected", "edited"] as const) {
    const entry = el("option", { value: option }, `${option} (${counts[option]})`);
    if (session.filters.decision === option) entry.setAttribute("selected", "true");
    decisionSelect.append(entry);
  }
  decisionSelect.addEventListener("change", () => {
    session.filters.decision = decisionSelect.value as typeof session.filters.decision;
    callbacks.onFiltersChanged();
  });

  const maxRank = Math.max(1, ...session.rows.map((r) => r.rank));
  const rankSlider = el("input", {
    type: "range",
    min: "1",
    max: String(maxRank),
    value: String(session.filters.maxRank ?? maxRank),
    id: "filter-rank",
  });
  const rankLabel = el("span", { class: "rank-label" },
    session.filters.maxRank === null ? "all ranks" : `rank ≤ ${session.filters.maxRank}`);
  rankSlider.addEventListener("input", () => {
    const value = Number(rankSlider.value);
    session.filters.maxRank = value >= maxRank ? null : value;
    callbacks.onFiltersChanged();
  });

  const relationInput = el("input", {
    type: "text",
    placeholder: "filter by relation",
    value: session.filters.relation,
    id: "filter-relation",
  });
  relationInput.addEventListener("input", () => {
    session.filters.relation = relationInput.value;
    callbacks.onFiltersChanged();
  });

  const refreshButton = el("button", { id: "refresh" }, "Refresh");
  refreshButton.addEventListener("click", callbacks.onRefresh);
  const exportButton = el("button", { id: "export" }, `Export (${counts.accepted + counts.edited})`);
  exportButton.addEventListener("click", callbacks.onExport);

  filterBar.append(
    el("label", {}, "Decision: ", decisionSelect),
    el("label", {}, "Rank: ", rankSlider, rankLabel),
    el("label", {}, "Relation: ", relationInput),
    refreshButton,
    exportButton,
  );
  container.append(filterBar);

  if (session.lastError) {
    container.append(el("p", { class: "err", id: "last-error" }, session.lastError));
  }

  const rows = session.visible();
  if (!rows.length) {
    container.append(
      el("p", { class: "hint" },
        session.rows.length
          ? "No candidates match the current filters."
          : "This job produced no candidates. Loosen the config (e.g. union aggregation) and rerun."),
    );
    return;
  }

  const table = el("table", { class: "candidates" });
  table.append(
    el("thead", {},
      el("tr", {},
        ...["#", "source", "target", "final", "forward", "swapped", "support", "method", "decision", ""].map(
          (h) => el("th", {}, h)),
      ),
    ),
  );
  const body = el("tbody");
  for (const row of rows) {
    const decisionBadge = row.decision
      ? el("span", { class: `badge badge-${row.decision}` }, row.decision)
      : el("span", { class: "badge badge-none" }, "undecided");
    const accept = el("button", { class: "act act-accept" }, "accept");
    accept.addEventListener("click", () => callbacks.onDecide(row, "accepted"));
    const reject = el("button", { class: "act act-reject" }, "reject");
    reject.addEventListener("click", () => callbacks.onDecide(row, "rejected"));
    const edit = el("button", { class: "act act-edit" }, "edit");
    edit.addEventListener("click", () => callbacks.onEdit(row));

    const provenance = `method=${row.method}`
      + (row.stable_round !== null ? ` round=${row.stable_round}` : "");
    body.append(
      el("tr", { class: "candidate", "data-key": `${row.source.join(".")}->${row.target.join(".")}` },
        el("td", {}, String(row.rank)),
        el("td", {}, `${row.source[0]}.${row.source[1]}`),
        el("td", {}, `${row.target[0]}.${row.target[1]}`),
        el("td", {}, confBar(row.conf_final, "final")),
        el("td", {}, confBar(row.conf_forward, "forward")),
        el("td", {}, confBar(row.conf_swapped, "swapped")),
        el("td", {}, String(row.support)),
        el("td", { title: provenance }, row.method),
        el("td", {}, decisionBadge, row.replacement
          ? el("div", { class: "replacement" },
              `→ ${row.replacement.source.join(".")} ↦ ${row.replacement.target.join(".")}`)
          : ""),
        el("td", {}, accept, reject, edit),
      ),
    );
  }
  table.append(body);
  container.append(table);
}

export function renderExport(container: HTMLElement, doc: unknown): void {
  let panel = document.getElementById("export-panel");
  if (!panel) {
    panel = el("pre", { id: "export-panel", class: "export" });
    container.append(panel);
  }
  panel.textContent = JSON.stringify(doc, null, 2);
}
